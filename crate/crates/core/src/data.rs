//! Samples, masks and domain datasets.

use crate::tensor::Tensor;
use crate::{Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Per-pixel class indices, row-major `h×w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width || data.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width],
                got: vec![data.len()],
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        Self {
            height,
            width,
            data: vec![class; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// One-hot `classes×h×w` probabilities.
    pub fn one_hot(&self, classes: usize) -> Result<Tensor> {
        let plane = self.data.len();
        let mut out = vec![0.0; classes * plane];
        for (i, &k) in self.data.iter().enumerate() {
            let k = k as usize;
            if k >= classes {
                return Err(Error::invalid("mask class index out of range"));
            }
            out[k * plane + i] = 1.0;
        }
        Ok(Tensor::new(&[classes, self.height, self.width], out)?)
    }

    /// Per-pixel argmax of a `K×h×w` tensor; ties resolve to the lower class.
    pub fn argmax(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 {
            return Err(Error::EmptySpatial);
        }
        let (k, h, w) = (s[0], s[1], s[2]);
        let plane = h * w;
        let d = t.data();
        let data = (0..plane)
            .map(|i| {
                let mut best = 0;
                for c in 1..k {
                    if d[c * plane + i] > d[best * plane + i] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        Self::new(h, w, data)
    }
}

/// One image/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `3×h×w`, values in `[0, 1]`.
    pub image: Tensor,
    pub mask: Mask,
    /// `K×h×w`, each pixel a probability vector.
    pub soft_mask: Tensor,
    pub domain: String,
}

impl Sample {
    pub fn new(
        image: Tensor,
        mask: Mask,
        classes: usize,
        domain: impl Into<String>,
    ) -> Result<Self> {
        let s = image.shape();
        if s.len() != 3 || s[0] != 3 || (s[1], s[2]) != mask.dims() {
            return Err(Error::ShapeMismatch {
                expected: vec![3, mask.height(), mask.width()],
                got: s.to_vec(),
            });
        }
        let soft_mask = mask.one_hot(classes)?;
        Ok(Self {
            image,
            mask,
            soft_mask,
            domain: domain.into(),
        })
    }

    pub fn classes(&self) -> usize {
        self.soft_mask.shape()[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Source,
    TargetSeen,
    TargetUnseen,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Source, Split::TargetSeen, Split::TargetUnseen];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Source => "source",
            Split::TargetSeen => "target-seen-style",
            Split::TargetUnseen => "target-unseen-style",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub split: Split,
    pub classes: usize,
    pub samples: Vec<Sample>,
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
