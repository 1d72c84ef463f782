//! Named parameter declaration and lookup.
//!
//! Layers declare their parameters once through [`Decls`]; the resulting specs
//! drive initialization, counting and checkpoint validation. At run time the same
//! names are resolved through a [`Scope`] over whatever value type the backend
//! uses.

use std::collections::BTreeMap;

use rand::Rng;

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn sample(&self, r: &mut impl Rng) -> Tensor {
        let mut t = Tensor::zeros(&self.shape);
        match self.init {
            Init::Zeros => {}
            Init::Ones => t.data_mut().fill(1.0),
            Init::Uniform(b) => t
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = r.gen_range(-b..=b)),
        }
        t
    }
}

/// Collects parameter specs under a dotted name prefix.
#[derive(Debug, Default)]
pub struct Decls {
    specs: Vec<ParamSpec>,
    prefix: Vec<String>,
}

impl Decls {
    pub fn new() -> Self {
        Self::default()
    }

    fn full_name(&self, name: &str) -> String {
        let mut parts = self.prefix.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    pub fn scope(&mut self, name: &str, f: impl FnOnce(&mut Decls)) {
        self.prefix.push(name.to_string());
        f(self);
        self.prefix.pop();
    }

    pub fn param(&mut self, name: &str, shape: Vec<usize>, init: Init) {
        let name = self.full_name(name);
        self.specs.push(ParamSpec { name, shape, init });
    }

    /// Weight and optional bias, both uniform with bound `1/√fan_in`.
    pub fn conv(&mut self, name: &str, spec: &ConvSpec) {
        let bound = 1.0 / (spec.fan_in() as f64).sqrt();
        self.conv_with(name, spec, Init::Uniform(bound));
    }

    pub fn zero_conv(&mut self, name: &str, spec: &ConvSpec) {
        self.conv_with(name, spec, Init::Zeros);
    }

    fn conv_with(&mut self, name: &str, spec: &ConvSpec, init: Init) {
        self.scope(name, |d| {
            d.param("weight", spec.weight_shape(), init);
            if spec.has_bias {
                d.param("bias", vec![spec.out_channels], init);
            }
        });
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn into_specs(self) -> Vec<ParamSpec> {
        self.specs
    }
}

/// Initializes every spec from one generator, in declaration order.
pub fn init_params(specs: &[ParamSpec], r: &mut impl Rng) -> BTreeMap<String, Tensor> {
    specs
        .iter()
        .map(|s| (s.name.clone(), s.sample(r)))
        .collect()
}

/// Every parameter uniform on `[-scale, scale]`, ignoring the declared init.
/// Used to probe blocks away from their trivial starting point.
pub fn random_params(
    specs: &[ParamSpec],
    r: &mut impl Rng,
    scale: f64,
) -> BTreeMap<String, Tensor> {
    specs
        .iter()
        .map(|s| {
            let spec = ParamSpec {
                init: Init::Uniform(scale),
                ..s.clone()
            };
            (s.name.clone(), spec.sample(r))
        })
        .collect()
}

/// Read-only view of a parameter map under a name prefix.
pub struct Scope<'a, V> {
    map: &'a BTreeMap<String, V>,
    prefix: String,
}

impl<V> Clone for Scope<'_, V> {
    fn clone(&self) -> Self {
        Self {
            map: self.map,
            prefix: self.prefix.clone(),
        }
    }
}

impl<'a, V> Scope<'a, V> {
    pub fn root(map: &'a BTreeMap<String, V>) -> Self {
        Self {
            map,
            prefix: String::new(),
        }
    }

    fn join(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn at(&self, name: &str) -> Scope<'a, V> {
        Scope {
            map: self.map,
            prefix: self.join(name),
        }
    }

    pub fn get(&self, name: &str) -> Result<&'a V> {
        let full = self.join(name);
        self.map
            .get(&full)
            .ok_or_else(|| Error::Config(format!("missing parameter `{full}`")))
    }

    pub fn get_opt(&self, name: &str) -> Option<&'a V> {
        self.map.get(&self.join(name))
    }
}

/// Applies the conv declared as `name` in `p`.
pub fn conv<B: Backend>(
    b: &B,
    p: &Scope<B::V>,
    name: &str,
    spec: &ConvSpec,
    x: &B::V,
) -> Result<B::V> {
    let p = p.at(name);
    let bias = if spec.has_bias {
        Some(p.get("bias")?)
    } else {
        None
    };
    b.conv2d(x, spec, p.get("weight")?, bias)
}
