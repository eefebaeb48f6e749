//! Named parameter storage and the convolution layers built on it.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::ops::ConvGeometry;
use crate::rng::SeededRng;
use crate::tensor::{Shape, Tensor};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    /// Position in store order; also the index into [`Bound::grads`].
    pub fn index(self) -> usize {
        self.0
    }
}

/// Insertion-ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Registers a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument { op: "param_store", reason: alloc::format!("duplicate parameter `{name}`") });
        }
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Replaces the value of an existing parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.id(name).ok_or_else(|| Error::UnknownParameter { name: name.to_string() })?;
        let current = self.values[id.0].shape();
        if current != value.shape() {
            return Err(Error::InvalidShape {
                op: "param_store",
                shape: value.shape(),
                reason: alloc::format!("parameter `{name}` expects shape {current}"),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }

    /// Sets every parameter whose name ends in `.bias` to zero.
    pub fn zero_biases(&mut self) {
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            if name.ends_with(".bias") {
                value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Records every parameter as a trainable leaf on `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound(self.values.iter().map(|t| g.param(t.clone())).collect())
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound(self.values.iter().map(|t| g.constant(t.clone())).collect())
    }
}

/// Graph handles for each parameter of a store, in store order.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    /// Leaf gradients after backward, aligned with the store's ids.
    pub fn grads(&self, g: &Graph) -> Vec<Option<Tensor>> {
        self.0.iter().map(|&v| g.grad(v).cloned()).collect()
    }
}

/// Uniform in `±sqrt(1 / fan_in)` for both kernel and bias.
fn init_uniform(shape: Shape, fan_in: usize, rng: &mut SeededRng) -> Tensor {
    let bound = libm::sqrt(1.0 / fan_in as f64);
    let data = (0..shape.numel()).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// A convolution with bias whose weights live in a [`ParamStore`].
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geometry: ConvGeometry,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv {
    /// Registers `<name>.weight` and `<name>.bias`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        geometry: ConvGeometry,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel * kernel;
        let w = init_uniform(Shape::new(out_ch, in_ch, kernel, kernel), fan_in, rng);
        let b = init_uniform(Shape::new(1, out_ch, 1, 1), fan_in, rng);
        let weight = store.insert(alloc::format!("{name}.weight"), w)?;
        let bias = store.insert(alloc::format!("{name}.bias"), b)?;
        Ok(Conv { weight, bias, geometry, in_ch, out_ch })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.var(self.weight), Some(p.var(self.bias)), self.geometry)
    }
}

/// 3x3 convolution followed by ReLU: the network's "convolution block".
#[derive(Debug, Clone, Copy)]
pub struct ConvBlock(pub Conv);

impl ConvBlock {
    /// 3x3 block with padding `dilation` (spatial size kept when `stride == 1`).
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        dilation: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let geometry = ConvGeometry::new(stride, dilation, dilation);
        Ok(ConvBlock(Conv::new(store, name, in_ch, out_ch, 3, geometry, rng)?))
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = self.0.forward(g, p, x)?;
        Ok(g.relu(y))
    }
}
