//! Binary checkpoints: a text header ending in `end_header`, then
//! little-endian f64 payload in manifest order.

use std::path::Path;

use super::text::{Document, Writer};
use super::{atomic_write, IoError, Result};
use crate::autodiff::Mat;
use crate::surrogate::{
    Activation, Architecture, Encoding, FieldInterpolant, FourierEncoder, NormalizationBox,
    StageModel, SurrogateModel,
};

pub const CHECKPOINT_MAGIC: &str = "# stagecast checkpoint v1";
const END_HEADER: &[u8] = b"end_header\n";

/// Anything that can be stored as a model.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    Network(SurrogateModel),
    /// Bilinear interpolant of a solved field; scores exactly zero error
    /// against that field.
    Interpolant(FieldInterpolant),
}

impl Checkpoint {
    pub fn as_model(&self) -> &dyn StageModel {
        match self {
            Checkpoint::Network(m) => m,
            Checkpoint::Interpolant(i) => i,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        let mut payload: Vec<f64> = Vec::new();
        match self {
            Checkpoint::Network(m) => {
                let a = m.architecture();
                let n = m.normalization();
                w.section("checkpoint");
                w.entry("kind", "network");
                match a.encoding {
                    Encoding::Fourier { features, sigma } => {
                        w.entry("encoding", "fourier");
                        w.entry("features", features);
                        w.entry("sigma", sigma);
                    }
                    Encoding::Raw => w.entry("encoding", "raw"),
                }
                w.entry("width", a.width);
                w.entry("blocks", a.blocks);
                w.entry("activation", a.activation.as_str());
                w.entry("x_min", n.x_min);
                w.entry("x_max", n.x_max);
                w.entry("t_min", n.t_min);
                w.entry("t_max", n.t_max);
                w.entry("seed", m.seed());
                let mut manifest = Vec::new();
                if let Some(enc) = m.encoder() {
                    let b = enc.frequencies();
                    manifest.push(format!("encoder.B:{}x{}", b.rows, b.cols));
                    payload.extend_from_slice(&b.data);
                }
                for p in m.manifest() {
                    manifest.push(format!("{}:{}x{}", p.name, p.rows, p.cols));
                }
                w.entry("manifest", manifest.join(" "));
                payload.extend_from_slice(m.weights());
            }
            Checkpoint::Interpolant(i) => {
                w.section("checkpoint");
                w.entry("kind", "interpolant");
                w.entry("n_x", i.x_grid().len());
                w.entry("n_t", i.t_grid().len());
                for part in [i.x_grid(), i.t_grid(), i.h_values(), i.u_values()] {
                    payload.extend_from_slice(part);
                }
            }
        }
        w.entry("payload_len", payload.len());
        let mut bytes = format!("{CHECKPOINT_MAGIC}\n{}", w.finish()).into_bytes();
        bytes.extend_from_slice(END_HEADER);
        for v in payload {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(END_HEADER.len())
            .position(|w| w == END_HEADER)
            .ok_or_else(|| IoError::Invalid("checkpoint header has no end_header line".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| IoError::Invalid("checkpoint header is not UTF-8".into()))?;
        if !header.starts_with(CHECKPOINT_MAGIC) {
            return Err(IoError::parse(1, "not a stagecast checkpoint"));
        }
        let body = &bytes[split + END_HEADER.len()..];
        if body.len() % 8 != 0 {
            return Err(IoError::Invalid(
                "payload is not a whole number of f64s".into(),
            ));
        }
        let payload: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut doc = Document::parse(header)?;
        let mut s = doc.take("checkpoint")?;
        let (kind, line) = s.raw("kind")?;
        let declared = s.usize("payload_len")?;
        if declared != payload.len() {
            return Err(IoError::Invalid(format!(
                "header declares {declared} values, payload has {}",
                payload.len()
            )));
        }
        let result = match kind.as_str() {
            "network" => {
                let (encoding, line) = s.raw("encoding")?;
                let encoding = match encoding.as_str() {
                    "fourier" => Encoding::Fourier {
                        features: s.usize("features")?,
                        sigma: s.f64("sigma")?,
                    },
                    "raw" => Encoding::Raw,
                    other => {
                        return Err(IoError::parse(line, format!("unknown encoding `{other}`")))
                    }
                };
                let width = s.usize("width")?;
                let blocks = s.usize("blocks")?;
                let (act, line) = s.raw("activation")?;
                let activation = Activation::parse(&act)
                    .ok_or_else(|| IoError::parse(line, format!("unknown activation `{act}`")))?;
                let norm = NormalizationBox {
                    x_min: s.f64("x_min")?,
                    x_max: s.f64("x_max")?,
                    t_min: s.f64("t_min")?,
                    t_max: s.f64("t_max")?,
                };
                let seed = s.u64("seed")?;
                let (manifest, line) = s.raw("manifest")?;
                let arch = Architecture {
                    encoding,
                    width,
                    blocks,
                    activation,
                };
                let mut expected: Vec<String> = Vec::new();
                if let Encoding::Fourier { features, .. } = encoding {
                    expected.push(format!("encoder.B:{features}x2"));
                }
                expected.extend(
                    arch.manifest()
                        .iter()
                        .map(|p| format!("{}:{}x{}", p.name, p.rows, p.cols)),
                );
                if manifest
                    .split_whitespace()
                    .ne(expected.iter().map(String::as_str))
                {
                    return Err(IoError::parse(
                        line,
                        "manifest does not match the architecture",
                    ));
                }
                let (encoder, weights) = match encoding {
                    Encoding::Fourier { features, sigma } => {
                        if payload.len() < 2 * features {
                            return Err(IoError::Invalid("payload too short".into()));
                        }
                        let b = Mat::from_vec(features, 2, payload[..2 * features].to_vec());
                        (
                            Some(FourierEncoder::from_matrix(b, sigma)),
                            payload[2 * features..].to_vec(),
                        )
                    }
                    Encoding::Raw => (None, payload),
                };
                let model = SurrogateModel::from_parts(arch, encoder, weights, norm, seed)
                    .map_err(|e| IoError::Invalid(e.to_string()))?;
                Checkpoint::Network(model)
            }
            "interpolant" => {
                let nx = s.usize("n_x")?;
                let nt = s.usize("n_t")?;
                let n = nx * nt;
                if payload.len() != nx + nt + 2 * n {
                    return Err(IoError::Invalid("interpolant payload size mismatch".into()));
                }
                let (x, rest) = payload.split_at(nx);
                let (t, rest) = rest.split_at(nt);
                let (h, u) = rest.split_at(n);
                let interp =
                    FieldInterpolant::from_grid(x.to_vec(), t.to_vec(), h.to_vec(), u.to_vec())
                        .map_err(|e| IoError::Invalid(e.to_string()))?;
                Checkpoint::Interpolant(interp)
            }
            other => {
                return Err(IoError::parse(
                    line,
                    format!("unknown checkpoint kind `{other}`"),
                ))
            }
        };
        s.finish()?;
        doc.finish()?;
        Ok(result)
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    atomic_write(path, &checkpoint.to_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_flood_wave_scenario;
    use crate::solver::{solve, SolverConfig};

    fn model(encoding: Encoding) -> SurrogateModel {
        let arch = Architecture {
            encoding,
            width: 8,
            blocks: 2,
            activation: Activation::Tanh,
        };
        SurrogateModel::new(
            arch,
            NormalizationBox::new(0.0, 5.0, 0.0, 10.0).unwrap(),
            11,
        )
        .unwrap()
    }

    #[test]
    fn network_round_trip() {
        for enc in [
            Encoding::Fourier {
                features: 6,
                sigma: 2.5,
            },
            Encoding::Raw,
        ] {
            let m = model(enc);
            let ck = Checkpoint::Network(m.clone());
            let bytes = ck.to_bytes();
            match Checkpoint::from_bytes(&bytes).unwrap() {
                Checkpoint::Network(back) => {
                    assert_eq!(back, m);
                    assert_eq!(back.encoder_digest(), m.encoder_digest());
                }
                other => panic!("{other:?}"),
            }
            assert_eq!(Checkpoint::from_bytes(&bytes).unwrap().to_bytes(), bytes);
        }
    }

    #[test]
    fn interpolant_round_trip() {
        let s = make_flood_wave_scenario(5, 2.0, 0).unwrap();
        let f = solve(
            &s,
            &SolverConfig {
                n_cells: 40,
                ..Default::default()
            },
        )
        .unwrap();
        let i = FieldInterpolant::new(&f).unwrap();
        match Checkpoint::from_bytes(&Checkpoint::Interpolant(i.clone()).to_bytes()).unwrap() {
            Checkpoint::Interpolant(back) => assert_eq!(back, i),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_or_corrupt_input_is_rejected() {
        let bytes = Checkpoint::Network(model(Encoding::Raw)).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"hello").is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(Checkpoint::from_bytes(&nan).is_err());
    }
}
