//! Binary model container.
//!
//! Single self-describing file holding the predictive model and, optionally,
//! its loss estimator. All integers and reals are little-endian; the exact
//! byte layout is documented in `docs/model-format.md`. Round-trips are
//! bit-exact for every parameter.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::network::LossEstimator;
use crate::nn::model::{Activation, LayerSpec, Mlp};

pub const MAGIC: &[u8; 8] = b"FIMPMDL\0";
pub const SCHEMA_VERSION: u32 = 1;

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn new(inner: R) -> Self {
        Reader { inner, offset: 0 }
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.offset,
            reason: reason.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(_) => Err(self.fail(format!("unexpected end of file reading {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b, what)?;
        Ok(b[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64(what)?);
        }
        Ok(out)
    }
}

struct Writer<W> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.inner.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn f64_all(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

fn activation_from(code: u8, offset: u64) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Identity),
        other => Err(Error::Parse {
            offset,
            reason: format!("unknown activation code {other}"),
        }),
    }
}

/// Write `model` (and `estimator`, when given) to `path`.
pub fn save_model(model: &Mlp, estimator: Option<&LossEstimator>, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = Writer {
        inner: std::io::BufWriter::new(file),
    };

    w.inner.write_all(MAGIC)?;
    w.u32(SCHEMA_VERSION)?;
    w.u8(if estimator.is_some() { 1 } else { 0 })?;

    // header: architecture, seeds, input width d, class count C
    let specs = model.layer_specs();
    w.u32(specs[0].fan_in as u32)?;
    w.u32(model.num_classes() as u32)?;
    w.u64(model.seed())?;
    w.f64(model.dropout_rate())?;
    w.u32(specs.len() as u32)?;
    for spec in &specs {
        w.u32(spec.fan_in as u32)?;
        w.u32(spec.fan_out as u32)?;
        w.u8(activation_code(spec.activation))?;
    }
    // parameter blocks in layer order: weights then biases
    for l in 0..specs.len() {
        w.f64_all(model.layer_weights(l))?;
        w.f64_all(model.layer_biases(l))?;
    }

    if let Some(est) = estimator {
        w.u64(est.seed())?;
        w.u32(est.taps().len() as u32)?;
        for &tap in est.taps() {
            w.u32(tap as u32)?;
        }
        w.u32(est.hidden_units() as u32)?;
        w.f64_all(&est.params_flat())?;
    }

    w.inner.flush()?;
    Ok(())
}

/// Read a model (and its estimator, when present) back from `path`.
pub fn load_model(path: impl AsRef<Path>) -> Result<(Mlp, Option<LossEstimator>)> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut r = Reader::new(std::io::BufReader::new(file));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            reason: "not a model file (bad magic)".into(),
        });
    }
    let version = r.u32("schema version")?;
    if version != SCHEMA_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: SCHEMA_VERSION,
        });
    }
    let has_estimator = match r.u8("estimator flag")? {
        0 => false,
        1 => true,
        other => return Err(r.fail(format!("bad estimator flag {other}"))),
    };

    let input_width = r.u32("input width")? as usize;
    let num_classes = r.u32("class count")? as usize;
    let seed = r.u64("model seed")?;
    let dropout_rate = r.f64("dropout rate")?;
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(r.fail(format!("dropout rate {dropout_rate} out of range")));
    }
    let num_layers = r.u32("layer count")? as usize;
    if num_layers == 0 || num_layers > 1024 {
        return Err(r.fail(format!("implausible layer count {num_layers}")));
    }
    let mut specs = Vec::with_capacity(num_layers);
    for i in 0..num_layers {
        let fan_in = r.u32("fan_in")? as usize;
        let fan_out = r.u32("fan_out")? as usize;
        let offset = r.offset;
        let activation = activation_from(r.u8("activation")?, offset)?;
        if fan_in == 0 || fan_out == 0 || fan_in > 1 << 20 || fan_out > 1 << 20 {
            return Err(r.fail(format!("implausible layer {i} shape {fan_in}x{fan_out}")));
        }
        specs.push(LayerSpec {
            fan_in,
            fan_out,
            activation,
        });
    }
    if specs[0].fan_in != input_width {
        return Err(r.fail("header input width disagrees with first layer"));
    }
    if specs[num_layers - 1].fan_out != num_classes {
        return Err(r.fail("header class count disagrees with last layer"));
    }

    let mut model = Mlp::from_specs(specs.clone(), dropout_rate, seed)
        .map_err(|e| r.fail(format!("invalid architecture: {e}")))?;
    for (l, spec) in specs.iter().enumerate() {
        let weights = r.f64_vec(spec.fan_in * spec.fan_out, "layer weights")?;
        let biases = r.f64_vec(spec.fan_out, "layer biases")?;
        model
            .set_layer(l, weights, biases)
            .map_err(|e| r.fail(format!("layer {l}: {e}")))?;
    }

    let estimator = if has_estimator {
        let est_seed = r.u64("estimator seed")?;
        let tap_count = r.u32("tap count")? as usize;
        if tap_count == 0 || tap_count > num_layers {
            return Err(r.fail(format!("implausible tap count {tap_count}")));
        }
        let mut taps = Vec::with_capacity(tap_count);
        for _ in 0..tap_count {
            taps.push(r.u32("tap index")? as usize);
        }
        let hidden_units = r.u32("estimator units")? as usize;
        let mut est = LossEstimator::new(&model, taps, hidden_units, est_seed)
            .map_err(|e| r.fail(format!("invalid estimator: {e}")))?;
        let params = r.f64_vec(est.param_count(), "estimator parameters")?;
        est.set_params_flat(&params)
            .map_err(|e| r.fail(format!("estimator parameters: {e}")))?;
        Some(est)
    } else {
        None
    };

    // trailing bytes mean the file does not match its own description
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra)? != 0 {
        return Err(r.fail("trailing bytes after model payload"));
    }

    Ok((model, estimator))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Mlp, LossEstimator) {
        let model = Mlp::new(&[5, 8, 6, 3], 0.1, 42).unwrap();
        let est = LossEstimator::for_model(&model, 43).unwrap();
        (model, est)
    }

    #[test]
    fn round_trip_is_exact() {
        let (model, est) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, Some(&est), &path).unwrap();
        let (back_model, back_est) = load_model(&path).unwrap();
        assert_eq!(model, back_model);
        assert_eq!(Some(est), back_est);
    }

    #[test]
    fn round_trip_without_estimator() {
        let (model, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, None, &path).unwrap();
        let (back_model, back_est) = load_model(&path).unwrap();
        assert_eq!(model, back_model);
        assert!(back_est.is_none());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let (model, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, None, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion { found: 99, .. }));
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let (model, est) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, Some(&est), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = bytes.len() / 2;
        std::fs::write(&path, &bytes[..cut]).unwrap();
        match load_model(&path).unwrap_err() {
            Error::Parse { offset, .. } => assert!(offset <= cut as u64),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        std::fs::write(&path, b"NOTAMODL0000000000000000").unwrap();
        assert!(matches!(load_model(&path).unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let (model, _) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, None, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_model(&path).unwrap_err(), Error::Parse { .. }));
    }
}
