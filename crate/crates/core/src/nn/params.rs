use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Gradients, ParamVars};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HBGS";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named trainable parameters in registration order, plus the seeded
/// generator used to initialise them.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
    rng: ChaCha8Rng,
}

impl<T: Real> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new(), index: HashMap::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn add(&mut self, name: &str, mut tensor: Tensor<T>) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::config(format!("duplicate parameter name `{name}`")));
        }
        tensor.requires_grad = true;
        tensor.grad = None;
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<usize> {
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..=bound)));
        self.add(name, t)
    }

    /// Kaiming-style fan-in uniform initialisation, bound `1/sqrt(fan_in)`.
    pub fn add_fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<usize> {
        self.add_uniform(name, shape, 1.0 / (fan_in as f64).sqrt())
    }

    pub fn add_const(&mut self, name: &str, shape: &[usize], value: f64) -> Result<usize> {
        self.add(name, Tensor::from_fn(shape, |_| T::lit(value)))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.id(name)?;
        Some(&mut self.tensors[i])
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn tensor(&self, id: usize) -> &Tensor<T> {
        &self.tensors[id]
    }

    pub fn tensor_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.tensors[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Copies the gradients reached by a backward pass into the parameter
    /// grad slots; parameters the pass did not reach get `None`.
    pub fn set_grads(&mut self, vars: &ParamVars, grads: &Gradients<T>) {
        for (id, t) in self.tensors.iter_mut().enumerate() {
            t.grad = vars.var_of(id).and_then(|v| grads.wrt(v)).map(<[T]>::to_vec);
        }
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(|t| t.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Same parameters in another precision (grads dropped).
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            index: self.index.clone(),
            rng: self.rng.clone(),
        }
    }

    /// Writes the binary checkpoint: magic, version, count, then per
    /// parameter its name, rank, dims and little-endian `f32` values.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in self.iter() {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R, seed: u64) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        let mut store = ParamStore::new(seed);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])).unwrap_or_else(T::nan))
                .collect();
            store.add(&name, Tensor::new(&shape, data)?)?;
        }
        Ok(store)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
