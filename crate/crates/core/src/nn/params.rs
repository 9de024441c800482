use serde::{Deserialize, Serialize};

/// Flat vector of the learnable scalars of one model component.
///
/// The layout is the deterministic pack order of the component that produced
/// it: layers in order, each layer's weight row-major then its bias, gate
/// scalars before their sub-networks. `pack` followed by `unpack` followed by
/// `pack` is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn norm2(&self) -> f64 {
        crate::linalg::norm2(&self.0)
    }
}

/// Sequential reader over a flat parameter buffer.
pub struct ParamReader<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> ParamReader<'a> {
    pub fn new(data: &'a [f64]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> &'a [f64] {
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    pub fn take_one(&mut self) -> f64 {
        let v = self.data[self.pos];
        self.pos += 1;
        v
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }
}

/// A component with a flat, deterministically ordered parameterization.
pub trait Params {
    fn param_count(&self) -> usize;
    fn pack_into(&self, out: &mut Vec<f64>);
    fn unpack_from(&mut self, reader: &mut ParamReader);
}

pub fn pack<P: Params + ?Sized>(p: &P) -> ParamVector {
    let mut out = Vec::with_capacity(p.param_count());
    p.pack_into(&mut out);
    debug_assert_eq!(out.len(), p.param_count());
    ParamVector(out)
}

pub fn unpack<P: Params + ?Sized>(p: &mut P, values: &ParamVector) {
    assert_eq!(
        values.len(),
        p.param_count(),
        "parameter vector length {} does not match component parameter count {}",
        values.len(),
        p.param_count()
    );
    let mut reader = ParamReader::new(values.as_slice());
    p.unpack_from(&mut reader);
    debug_assert_eq!(reader.remaining(), 0);
}
