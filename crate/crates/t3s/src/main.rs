fn main() {
    std::process::exit(t3s::cli::dispatch(std::env::args_os()));
}
