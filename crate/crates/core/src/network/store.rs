use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::config::ModelConfig;
use super::model::declare_model;
use crate::autodiff::{Tape, Var};
use crate::error::{CheckpointError, Error, Result};
use crate::params::{init_params, ParamSpec, Scope};
use crate::random::rng;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FLKR";
const VERSION: u32 = 1;

/// Named model parameters, ordered by name.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn from_map(params: BTreeMap<String, Tensor>) -> Self {
        Self { params }
    }

    /// Initializes every declared parameter from `seed`.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Self {
        Self {
            params: init_params(specs, &mut rng(seed)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.params.insert(name.into(), t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn as_map(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn scope(&self) -> Scope<'_, Tensor> {
        Scope::root(&self.params)
    }

    /// Registers every parameter as a differentiable leaf on `tape`.
    pub fn bind(&self, tape: &Tape) -> BTreeMap<String, Var> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect()
    }

    /// Checks that names and shapes agree exactly with `specs`.
    pub fn validate(&self, specs: &[ParamSpec]) -> Result<()> {
        let declared: BTreeSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        let unexpected: Vec<String> = self
            .names()
            .filter(|n| !declared.contains(n))
            .map(String::from)
            .collect();
        if !unexpected.is_empty() {
            return Err(CheckpointError::UnexpectedNames(unexpected).into());
        }
        let missing: Vec<String> = specs
            .iter()
            .filter(|s| !self.params.contains_key(&s.name))
            .map(|s| s.name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CheckpointError::MissingNames(missing).into());
        }
        for s in specs {
            let found = self.params[&s.name].shape();
            if found != s.shape.as_slice() {
                return Err(CheckpointError::ShapeMismatch {
                    name: s.name.clone(),
                    expected: s.shape.clone(),
                    found: found.to_vec(),
                }
                .into());
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.numel() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = r.u32()?;
        let mut params = BTreeMap::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::BadName)?
                .to_string();
            let ndim = r.take(1)?[0] as usize;
            let dims: Vec<u32> = (0..ndim).map(|_| r.u32()).collect::<Result<_, _>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .filter(|&n| n.checked_mul(4).is_some() && dims.iter().all(|&d| d > 0) && ndim > 0)
                .ok_or_else(|| CheckpointError::ShapeOverflow {
                    name: name.clone(),
                    dims: dims.clone(),
                })?;
            let raw = r.take(numel * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            let shape = dims.iter().map(|&d| d as usize).collect();
            let t = Tensor::new(shape, data).map_err(|_| CheckpointError::ShapeOverflow {
                name: name.clone(),
                dims: dims.clone(),
            })?;
            if params.insert(name.clone(), t).is_some() {
                return Err(CheckpointError::DuplicateName(name));
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes);
        }
        Ok(Self { params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io_at(path, e))
    }

    /// Reads a checkpoint without checking it against a model.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io_at(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }

    /// Reads a checkpoint and checks it against the parameters of `cfg`.
    pub fn load_for(path: &Path, cfg: &ModelConfig) -> Result<Self> {
        let store = Self::load(path)?;
        store.validate(&declare_model(cfg)?)?;
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::UnexpectedEof)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Builds the initialized parameters of `cfg`. The residual head starts at zero,
/// so the untrained network returns its base frame.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    Ok(ParamStore::init(&declare_model(cfg)?, seed))
}
