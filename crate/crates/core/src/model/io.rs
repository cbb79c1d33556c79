//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! "SEGFEAT\0"  u32 version
//! u32 len      hyperparameters as `key = value` lines (UTF-8)
//! u32 count    blocks: u32 name_len, name, u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! Blocks are the parameters in registration order, optionally followed by
//! `norm.mean` and `norm.std` (1 x D) feature statistics.

use std::collections::BTreeMap;
use std::path::Path;

use super::{ModelConfig, SegmentalModel};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureStats};

const MAGIC: &[u8; 8] = b"SEGFEAT\0";
const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

impl SegmentalModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header = self.header_text();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());

        let mut blocks: Vec<(&str, &Tensor)> = self.params.iter().map(|(n, p)| (n, &p.value)).collect();
        let stats = self.stats.as_ref().map(|s| (Tensor::row_vector(s.mean.clone()), Tensor::row_vector(s.std.clone())));
        if let Some((mean, std)) = &stats {
            blocks.push(("norm.mean", mean));
            blocks.push(("norm.std", std));
        }
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, t) in blocks {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a model file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let hlen = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(hlen)?).map_err(|_| bad("header is not UTF-8"))?;
        let (config, features, inventory, sample_rate) = parse_header(header)?;
        let mut model = SegmentalModel::with_input_dim(config, features, inventory)
            .map_err(|e| bad(format!("stored configuration rejected: {e}")))?;
        model.sample_rate = sample_rate;

        let count = r.u32()? as usize;
        let mut seen = 0usize;
        let mut mean = None;
        let mut std = None;
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| bad("block name is not UTF-8"))?.to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| bad("block too large"))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("block too large"))?)?;
            let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            match name.as_str() {
                "norm.mean" => mean = Some(data),
                "norm.std" => std = Some(data),
                _ => {
                    let p = model.params.by_name_mut(&name).map_err(|_| bad(format!("unexpected block `{name}`")))?;
                    if p.value.shape() != (rows, cols) {
                        return Err(bad(format!(
                            "block `{name}` is {rows}x{cols}, expected {}x{}",
                            p.value.rows(),
                            p.value.cols()
                        )));
                    }
                    p.value = Tensor::from_vec(rows, cols, data)?;
                    seen += 1;
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after the last block"));
        }
        if seen != model.params.len() {
            return Err(bad(format!("{} of {} parameters present", seen, model.params.len())));
        }
        model.stats = match (mean, std) {
            (Some(mean), Some(std)) if mean.len() == std.len() => Some(FeatureStats { mean, std }),
            (None, None) => None,
            _ => return Err(bad("incomplete normalization statistics")),
        };
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }

    fn header_text(&self) -> String {
        let c = &self.config;
        let f = &self.features;
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("model.input_dim = {}", c.input_dim),
            format!("model.hidden = {}", c.hidden),
            format!("model.layers = {}", c.layers),
            format!("model.head_hidden = {}", c.head_hidden.map_or("none".to_string(), |h| h.to_string())),
            format!("model.forget_bias = {}", c.forget_bias),
            format!("model.shared_heads = {}", c.shared_heads),
            format!("model.mean_span = {}", c.mean_span),
            format!("model.end_spans = {}", c.end_spans),
            format!("model.bin_head = {}", c.bin_head),
            format!("model.seed = {}", c.seed),
            format!("features.frame_shift = {}", f.frame_shift),
            format!("features.window_length = {}", f.window_length),
            format!("features.n_mfcc = {}", f.n_mfcc),
            format!("features.n_mel_filters = {}", f.n_mel_filters),
            format!("features.n_fft = {}", f.n_fft.map_or("none".to_string(), |n| n.to_string())),
            format!("features.pre_emphasis = {}", f.pre_emphasis),
            format!("features.delta_window = {}", f.delta_window),
            format!("features.spectral_offsets = {}", join(&f.spectral_offsets)),
            format!("features.normalize = {}", f.normalize),
        ];
        lines.push(format!("sample_rate = {}", self.sample_rate.map_or("none".to_string(), |r| r.to_string())));
        lines.push(format!("inventory = {}", self.inventory.join(" ")));
        lines.join("\n") + "\n"
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn parse_header(text: &str) -> Result<(ModelConfig, FeatureConfig, Vec<String>, Option<u32>)> {
    let mut kv = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad header line `{line}`")))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("missing header key `{k}`")));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| bad(format!("bad value `{v}` for `{k}`")))
    }
    let opt = |k: &str| -> Result<Option<usize>> {
        match get(k)? {
            "none" => Ok(None),
            v => num(k, v).map(Some),
        }
    };
    let p = |k: &str| -> Result<usize> { num(k, get(k)?) };
    let fl = |k: &str| -> Result<f64> { num(k, get(k)?) };
    let b = |k: &str| -> Result<bool> { num(k, get(k)?) };

    let config = ModelConfig {
        input_dim: p("model.input_dim")?,
        hidden: p("model.hidden")?,
        layers: p("model.layers")?,
        head_hidden: opt("model.head_hidden")?,
        forget_bias: fl("model.forget_bias")?,
        shared_heads: b("model.shared_heads")?,
        mean_span: b("model.mean_span")?,
        end_spans: b("model.end_spans")?,
        bin_head: b("model.bin_head")?,
        seed: num("model.seed", get("model.seed")?)?,
    };
    let offsets = get("features.spectral_offsets")?;
    let features = FeatureConfig {
        frame_shift: fl("features.frame_shift")?,
        window_length: fl("features.window_length")?,
        n_mfcc: p("features.n_mfcc")?,
        n_mel_filters: p("features.n_mel_filters")?,
        n_fft: opt("features.n_fft")?,
        pre_emphasis: fl("features.pre_emphasis")?,
        delta_window: p("features.delta_window")?,
        spectral_offsets: if offsets.is_empty() {
            Vec::new()
        } else {
            offsets.split(',').map(|s| num("features.spectral_offsets", s.trim())).collect::<Result<_>>()?
        },
        normalize: b("features.normalize")?,
    };
    let inventory = get("inventory")?.split_whitespace().map(str::to_string).collect();
    let sample_rate = match get("sample_rate")? {
        "none" => None,
        v => Some(num("sample_rate", v)?),
    };
    Ok((config, features, inventory, sample_rate))
}
