//! Minimal neural toolkit: dense stacks, a GRU cell, Adam, soft target
//! updates, and a binary checkpoint format.
//!
//! Architectures are fixed and hand-differentiated; there is no general
//! autodiff graph. All math runs in the scalar type `F` (64-bit floats in
//! practice — the networks are tiny and debuggability wins over speed).
//! Batches are stored column-wise: an input batch is `(features × batch)`.

mod dense;
mod gru;
mod optim;

pub use dense::{Activation, Dense, DenseGrads, Mlp, MlpCache, MlpGrads};
pub use gru::{Gru, GruGrads, GruSeqCache};
pub use optim::{clip_gradient_norm, Adam};

use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use crate::scalar::Real;

/// Parameter visitation in a stable order, shared by the optimizer, the
/// target-update rule, and checkpointing.
pub trait Parametric<F: Real> {
    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&Array2<F>>;
    fn params_mut(&mut self) -> Vec<&mut Array2<F>>;

    /// Zero-filled gradient buffers matching this network's parameters.
    fn zero_grads(&self) -> Vec<Array2<F>> {
        self.params()
            .iter()
            .map(|p| Array2::zeros(p.raw_dim()))
            .collect()
    }

    /// Owned named snapshot of every parameter.
    fn snapshot(&self) -> ParamBlock<F> {
        ParamBlock {
            entries: self
                .param_names()
                .into_iter()
                .zip(self.params())
                .map(|(name, p)| (name, p.clone()))
                .collect(),
        }
    }

    /// Overwrite parameters from a snapshot taken of an identically-shaped
    /// network.
    fn restore(&mut self, block: &ParamBlock<F>) -> Result<(), CheckpointError> {
        let names = self.param_names();
        if names.len() != block.entries.len() {
            return Err(CheckpointError::Mismatch(format!(
                "expected {} parameters, snapshot has {}",
                names.len(),
                block.entries.len()
            )));
        }
        for ((name, (snap_name, value)), param) in
            names.iter().zip(&block.entries).zip(self.params_mut())
        {
            if name != snap_name {
                return Err(CheckpointError::Mismatch(format!(
                    "parameter order mismatch: expected {name}, snapshot has {snap_name}"
                )));
            }
            if param.raw_dim() != value.raw_dim() {
                return Err(CheckpointError::Mismatch(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    param.shape(),
                    value.shape()
                )));
            }
            param.assign(value);
        }
        Ok(())
    }
}

/// Polyak update `target ← tau·online + (1−tau)·target`, elementwise over
/// every parameter pair.
pub fn soft_update<F: Real, N: Parametric<F>>(target: &mut N, online: &N, tau: F) {
    let one_minus = F::one() - tau;
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        azip_inplace(t, o, |t, &o| *t = tau * o + one_minus * *t);
    }
}

fn azip_inplace<F: Real>(a: &mut Array2<F>, b: &Array2<F>, f: impl Fn(&mut F, &F)) {
    ndarray::Zip::from(a).and(b).for_each(f);
}

/// Weight initialization: uniform on `±1/√fan_in`; biases start at zero.
pub fn init_matrix<F: Real, R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        F::from_f64_lit(rng.gen_range(-bound..bound))
    })
}

/// Named dense arrays with shapes — the unit of checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock<F: Real> {
    pub entries: Vec<(String, Array2<F>)>,
}

impl<F: Real> ParamBlock<F> {
    pub fn new(entries: Vec<(String, Array2<F>)>) -> Self {
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Array2<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint does not match network: {0}")]
    Mismatch(String),
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"RBCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Binary checkpoint layout (all integers little-endian):
///
/// ```text
/// magic "RBCK" | version u32 | entry count u32
/// per entry:   name_len u16 | name bytes | rows u32 | cols u32
/// payload:     row-major f64 values for each entry, in order
/// ```
pub fn save_checkpoint<F: Real>(path: &Path, block: &ParamBlock<F>) -> Result<(), CheckpointError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(block.entries.len() as u32).to_le_bytes())?;
    for (name, arr) in &block.entries {
        let bytes = name.as_bytes();
        out.write_all(&(bytes.len() as u16).to_le_bytes())?;
        out.write_all(bytes)?;
        out.write_all(&(arr.nrows() as u32).to_le_bytes())?;
        out.write_all(&(arr.ncols() as u32).to_le_bytes())?;
    }
    for (_, arr) in &block.entries {
        for v in arr.iter() {
            let v = v.to_f64().expect("finite parameter");
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<ParamBlock<F>, CheckpointError> {
    let mut inp = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    inp.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut inp)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let count = read_u32(&mut inp)? as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut inp)? as usize;
        let mut name = vec![0u8; name_len];
        inp.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| CheckpointError::Corrupt("non-UTF-8 parameter name".into()))?;
        let rows = read_u32(&mut inp)? as usize;
        let cols = read_u32(&mut inp)? as usize;
        shapes.push((name, rows, cols));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            inp.read_exact(&mut buf)?;
            let v = f64::from_le_bytes(buf);
            data.push(F::from_f64(v).ok_or_else(|| {
                CheckpointError::Corrupt(format!("value {v} not representable"))
            })?);
        }
        let arr = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        entries.push((name, arr));
    }
    Ok(ParamBlock { entries })
}

fn read_u32<R: std::io::Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16<R: std::io::Read>(r: &mut R) -> Result<u16, CheckpointError> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

/// Central finite difference `(f(+h) − f(−h)) / 2h`, where `loss_at(d)` must
/// evaluate the loss with one coordinate shifted by `d` and then restore it.
/// Lives here (not in test code) so integration suites can reuse it as the
/// gradient oracle; it never touches the backward implementations.
pub fn central_difference(h: f64, mut loss_at: impl FnMut(f64) -> f64) -> f64 {
    (loss_at(h) - loss_at(-h)) / (2.0 * h)
}

/// Relative error with a floor, for comparing analytic and numeric gradients.
pub fn gradient_relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_update_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let online = Mlp::<f64>::new(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], &mut rng);
        let mut tau_one = Mlp::<f64>::new(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], &mut rng);
        let frozen = tau_one.snapshot();

        soft_update(&mut tau_one, &online, 1.0);
        assert_eq!(tau_one.snapshot(), online.snapshot());

        let mut tau_zero = Mlp::<f64>::new(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], &mut rng);
        tau_zero.restore(&frozen).unwrap();
        soft_update(&mut tau_zero, &online, 0.0);
        assert_eq!(tau_zero.snapshot(), frozen);
    }

    #[test]
    fn soft_update_halfway() {
        let mut a = Mlp::<f64>::new_zeroed(&[1, 1], &[Activation::Identity]);
        let mut b = Mlp::<f64>::new_zeroed(&[1, 1], &[Activation::Identity]);
        a.params_mut()[0][(0, 0)] = 0.0;
        b.params_mut()[0][(0, 0)] = 2.0;
        soft_update(&mut a, &b, 0.5);
        assert_eq!(a.params()[0][(0, 0)], 1.0);
    }

    #[test]
    fn target_drift_shrinks_by_one_minus_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let online = Mlp::<f64>::new(&[4, 3], &[Activation::Identity], &mut rng);
        let mut target = Mlp::<f64>::new(&[4, 3], &[Activation::Identity], &mut rng);
        let tau = 0.25;
        let gap0: Vec<Array2<f64>> = target
            .params()
            .iter()
            .zip(online.params())
            .map(|(t, o)| t.to_owned() - o)
            .collect();
        let k = 5;
        for _ in 0..k {
            soft_update(&mut target, &online, tau);
        }
        let shrink = (1.0 - tau).powi(k);
        for ((t, o), g0) in target.params().iter().zip(online.params()).zip(&gap0) {
            let gap = t.to_owned() - o;
            for (after, before) in gap.iter().zip(g0.iter()) {
                assert!((after - before * shrink).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::<f64>::new(&[5, 7, 2], &[Activation::Relu, Activation::Identity], &mut rng);
        let block = net.snapshot();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&path, &block).unwrap();
        let loaded: ParamBlock<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(block, loaded);
        for ((_, a), (_, b)) in block.entries.iter().zip(&loaded.entries) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(CheckpointError::BadMagic)
        ));
    }
}
