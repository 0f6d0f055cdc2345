//! GPT-2 parameters.
//!
//! Linear weights are kept in the checkpoint's `(in, out)` orientation so that
//! activations are row vectors and `y = x · W`. With that layout the rows of
//! an MLP output matrix are exactly the value vectors `v^{l,n}`, and the
//! per-head slices of the attention projections are contiguous column (for
//! Q/K/V) or row (for O) blocks.
//!
//! Tensor names, with an optional `transformer.` prefix:
//!
//! | name                         | shape        |
//! |------------------------------|--------------|
//! | `wte.weight`                 | `(V, d)`     |
//! | `wpe.weight`                 | `(ctx, d)`   |
//! | `h.{l}.ln_1.{weight,bias}`   | `(d)`        |
//! | `h.{l}.attn.c_attn.weight`   | `(d, 3d)`    |
//! | `h.{l}.attn.c_attn.bias`     | `(3d)`       |
//! | `h.{l}.attn.c_proj.weight`   | `(d, d)`     |
//! | `h.{l}.attn.c_proj.bias`     | `(d)`        |
//! | `h.{l}.ln_2.{weight,bias}`   | `(d)`        |
//! | `h.{l}.mlp.c_fc.weight`      | `(d, 4d)`    |
//! | `h.{l}.mlp.c_fc.bias`        | `(4d)`       |
//! | `h.{l}.mlp.c_proj.weight`    | `(4d, d)`    |
//! | `h.{l}.mlp.c_proj.bias`      | `(d)`        |
//! | `ln_f.{weight,bias}`         | `(d)`        |
//!
//! The unembedding is tied to `wte`; `lm_head.weight` and the `attn.bias`
//! mask buffers are ignored if present.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use safetensors::{Dtype, SafeTensors};

use super::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Arc<Array1<f32>>,
    pub beta: Arc<Array1<f32>>,
}

impl LayerNormParams {
    pub fn identity(d: usize) -> Self {
        LayerNormParams {
            gamma: Arc::new(Array1::ones(d)),
            beta: Arc::new(Array1::zeros(d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNormParams,
    /// `(d, 3d)`: columns `[0, d)` are Q, `[d, 2d)` K, `[2d, 3d)` V.
    pub w_qkv: Arc<Array2<f32>>,
    pub b_qkv: Arc<Array1<f32>>,
    /// `(d, d)`: rows `[h*dh, (h+1)*dh)` are head `h`'s output projection.
    pub w_o: Arc<Array2<f32>>,
    pub b_o: Arc<Array1<f32>>,
    pub ln2: LayerNormParams,
    /// `(d, d_mlp)`.
    pub w_in: Arc<Array2<f32>>,
    pub b_in: Arc<Array1<f32>>,
    /// `(d_mlp, d)`: row `n` is value vector `v^{l,n}`.
    pub w_out: Arc<Array2<f32>>,
    pub b_out: Arc<Array1<f32>>,
}

impl Block {
    fn head_cols(&self, which: usize, head: usize, d: usize, dh: usize) -> ArrayView2<'_, f32> {
        let start = which * d + head * dh;
        self.w_qkv.slice(s![.., start..start + dh])
    }
}

/// All parameters of a GPT-2 model. Cloning is cheap: tensors are shared and
/// only copied when an edit touches them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    /// `(V, d)`; also the unembedding, so `W_U[:, t]` is row `t`.
    pub wte: Arc<Array2<f32>>,
    pub wpe: Arc<Array2<f32>>,
    pub blocks: Vec<Block>,
    pub ln_f: LayerNormParams,
}

fn tensor_names(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, m, v) = (cfg.d_model, cfg.d_mlp, cfg.vocab_size);
    let mut names = vec![
        ("wte.weight".to_string(), vec![v, d]),
        ("wpe.weight".to_string(), vec![cfg.n_ctx, d]),
    ];
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("h.{l}.{s}");
        names.extend([
            (p("ln_1.weight"), vec![d]),
            (p("ln_1.bias"), vec![d]),
            (p("attn.c_attn.weight"), vec![d, 3 * d]),
            (p("attn.c_attn.bias"), vec![3 * d]),
            (p("attn.c_proj.weight"), vec![d, d]),
            (p("attn.c_proj.bias"), vec![d]),
            (p("ln_2.weight"), vec![d]),
            (p("ln_2.bias"), vec![d]),
            (p("mlp.c_fc.weight"), vec![d, m]),
            (p("mlp.c_fc.bias"), vec![m]),
            (p("mlp.c_proj.weight"), vec![m, d]),
            (p("mlp.c_proj.bias"), vec![d]),
        ]);
    }
    names.push(("ln_f.weight".to_string(), vec![d]));
    names.push(("ln_f.bias".to_string(), vec![d]));
    names
}

struct Loader<'a> {
    st: SafeTensors<'a>,
    by_short: HashMap<String, String>,
}

impl Loader<'_> {
    fn take(&self, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        let full = self
            .by_short
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        let view = self
            .st
            .tensor(full)
            .map_err(|e| Error::Archive(format!("{name}: {e}")))?;
        if view.shape() != shape {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: view.shape().to_vec(),
            });
        }
        if view.dtype() != Dtype::F32 {
            return Err(Error::UnsupportedDtype {
                name: name.to_string(),
                dtype: format!("{:?}", view.dtype()),
            });
        }
        let data: Vec<f32> = view
            .data()
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(data)
    }

    fn vec(&self, name: &str, n: usize) -> Result<Arc<Array1<f32>>> {
        Ok(Arc::new(Array1::from_vec(self.take(name, &[n])?)))
    }

    fn mat(&self, name: &str, r: usize, c: usize) -> Result<Arc<Array2<f32>>> {
        let data = self.take(name, &[r, c])?;
        Ok(Arc::new(
            Array2::from_shape_vec((r, c), data).expect("length checked against shape"),
        ))
    }

    fn ln(&self, prefix: &str, d: usize) -> Result<LayerNormParams> {
        Ok(LayerNormParams {
            gamma: self.vec(&format!("{prefix}.weight"), d)?,
            beta: self.vec(&format!("{prefix}.bias"), d)?,
        })
    }
}

impl ModelWeights {
    /// Loads a single-file safetensors checkpoint.
    pub fn load(path: &Path, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        // SAFETY: the mapping is read-only and dropped before returning; all
        // tensors are copied into owned arrays.
        let mmap = unsafe { memmap2::Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&mmap, config)
    }

    /// Loads from an in-memory safetensors archive.
    pub fn from_bytes(bytes: &[u8], config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Archive(e.to_string()))?;
        let by_short = st
            .names()
            .into_iter()
            .map(|n| {
                (
                    n.strip_prefix("transformer.").unwrap_or(n).to_string(),
                    n.clone(),
                )
            })
            .collect();
        let ld = Loader { st, by_short };

        // Report the first missing tensor in canonical order before anything else.
        let expected = tensor_names(config);
        if let Some((name, _)) = expected.iter().find(|(n, _)| !ld.by_short.contains_key(n)) {
            return Err(Error::MissingTensor(name.clone()));
        }

        let (d, m, v) = (config.d_model, config.d_mlp, config.vocab_size);
        let wte = ld.mat("wte.weight", v, d)?;
        let wpe = ld.mat("wpe.weight", config.n_ctx, d)?;
        let mut blocks = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = |s: &str| format!("h.{l}.{s}");
            blocks.push(Block {
                ln1: ld.ln(&p("ln_1"), d)?,
                w_qkv: ld.mat(&p("attn.c_attn.weight"), d, 3 * d)?,
                b_qkv: ld.vec(&p("attn.c_attn.bias"), 3 * d)?,
                w_o: ld.mat(&p("attn.c_proj.weight"), d, d)?,
                b_o: ld.vec(&p("attn.c_proj.bias"), d)?,
                ln2: ld.ln(&p("ln_2"), d)?,
                w_in: ld.mat(&p("mlp.c_fc.weight"), d, m)?,
                b_in: ld.vec(&p("mlp.c_fc.bias"), m)?,
                w_out: ld.mat(&p("mlp.c_proj.weight"), m, d)?,
                b_out: ld.vec(&p("mlp.c_proj.bias"), d)?,
            });
        }
        let ln_f = ld.ln("ln_f", d)?;
        let w = ModelWeights {
            config: config.clone(),
            wte,
            wpe,
            blocks,
            ln_f,
        };
        Ok(w)
    }

    /// Writes the weights as a hub-layout safetensors archive.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut owned: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
        for (name, shape) in tensor_names(&self.config) {
            let data = self.tensor_by_name(&name).expect("canonical names resolve");
            let bytes = data.iter().flat_map(|x| x.to_le_bytes()).collect();
            owned.push((name, shape, bytes));
        }
        let views = owned
            .iter()
            .map(|(n, shape, bytes)| {
                safetensors::tensor::TensorView::new(Dtype::F32, shape.clone(), bytes)
                    .map(|v| (n.clone(), v))
                    .map_err(|e| Error::Archive(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        safetensors::serialize_to_file(views, &None, path)
            .map_err(|e| Error::Archive(e.to_string()))
    }

    fn tensor_by_name(&self, name: &str) -> Option<Vec<f32>> {
        let flat2 = |a: &Array2<f32>| a.iter().copied().collect::<Vec<_>>();
        let flat1 = |a: &Array1<f32>| a.to_vec();
        match name {
            "wte.weight" => return Some(flat2(&self.wte)),
            "wpe.weight" => return Some(flat2(&self.wpe)),
            "ln_f.weight" => return Some(flat1(&self.ln_f.gamma)),
            "ln_f.bias" => return Some(flat1(&self.ln_f.beta)),
            _ => {}
        }
        let rest = name.strip_prefix("h.")?;
        let (l, field) = rest.split_once('.')?;
        let b = self.blocks.get(l.parse::<usize>().ok()?)?;
        Some(match field {
            "ln_1.weight" => flat1(&b.ln1.gamma),
            "ln_1.bias" => flat1(&b.ln1.beta),
            "attn.c_attn.weight" => flat2(&b.w_qkv),
            "attn.c_attn.bias" => flat1(&b.b_qkv),
            "attn.c_proj.weight" => flat2(&b.w_o),
            "attn.c_proj.bias" => flat1(&b.b_o),
            "ln_2.weight" => flat1(&b.ln2.gamma),
            "ln_2.bias" => flat1(&b.ln2.beta),
            "mlp.c_fc.weight" => flat2(&b.w_in),
            "mlp.c_fc.bias" => flat1(&b.b_in),
            "mlp.c_proj.weight" => flat2(&b.w_out),
            "mlp.c_proj.bias" => flat1(&b.b_out),
            _ => return None,
        })
    }

    /// Checks shapes against the config and that every value is finite.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.blocks.len() != self.config.n_layers {
            return Err(Error::Config(format!(
                "{} blocks for {} layers",
                self.blocks.len(),
                self.config.n_layers
            )));
        }
        for (name, shape) in tensor_names(&self.config) {
            let data = self.tensor_by_name(&name).expect("canonical names resolve");
            if data.len() != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: shape,
                    found: vec![data.len()],
                });
            }
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }

    /// Unembedding column `W_U[:, token]`.
    pub fn unembed(&self, token: u32) -> Result<ArrayView1<'_, f32>> {
        if token as usize >= self.config.vocab_size {
            return Err(Error::TokenOutOfRange(token));
        }
        Ok(self.wte.row(token as usize))
    }

    /// Value vector `v^{l,n}`.
    pub fn value_vector(&self, layer: usize, dim: usize) -> Result<ArrayView1<'_, f32>> {
        self.check_mlp_index(layer, dim)?;
        Ok(self.blocks[layer].w_out.row(dim))
    }

    pub fn w_q(&self, layer: usize, head: usize) -> ArrayView2<'_, f32> {
        let c = &self.config;
        self.blocks[layer].head_cols(0, head, c.d_model, c.d_head())
    }

    pub fn w_k(&self, layer: usize, head: usize) -> ArrayView2<'_, f32> {
        let c = &self.config;
        self.blocks[layer].head_cols(1, head, c.d_model, c.d_head())
    }

    pub fn w_v(&self, layer: usize, head: usize) -> ArrayView2<'_, f32> {
        let c = &self.config;
        self.blocks[layer].head_cols(2, head, c.d_model, c.d_head())
    }

    /// Head `h`'s slice of the output projection, `(d_head, d)`.
    pub fn w_o(&self, layer: usize, head: usize) -> ArrayView2<'_, f32> {
        let dh = self.config.d_head();
        self.blocks[layer]
            .w_o
            .slice(s![head * dh..(head + 1) * dh, ..])
    }

    pub(crate) fn check_mlp_index(&self, layer: usize, dim: usize) -> Result<()> {
        if layer >= self.config.n_layers || dim >= self.config.d_mlp {
            return Err(Error::HookOutOfBounds(format!(
                "MLP locus ({layer}, {dim}) outside {} layers x {} dims",
                self.config.n_layers, self.config.d_mlp
            )));
        }
        Ok(())
    }

    pub(crate) fn check_head_index(&self, layer: usize, head: usize) -> Result<()> {
        if layer >= self.config.n_layers || head >= self.config.n_heads {
            return Err(Error::HookOutOfBounds(format!(
                "head ({layer}, {head}) outside {} layers x {} heads",
                self.config.n_layers, self.config.n_heads
            )));
        }
        Ok(())
    }

    /// Replaces row `dim` of layer `layer`'s MLP output matrix. Only that
    /// matrix is copied; every other tensor stays shared with `self`.
    pub fn with_value_vector(
        &self,
        layer: usize,
        dim: usize,
        row: ArrayView1<'_, f32>,
    ) -> Result<ModelWeights> {
        self.check_mlp_index(layer, dim)?;
        if row.len() != self.config.d_model {
            return Err(Error::DimensionMismatch {
                expected: self.config.d_model,
                found: row.len(),
            });
        }
        let mut out = self.clone();
        Arc::make_mut(&mut out.blocks[layer].w_out)
            .row_mut(dim)
            .assign(&row);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig::custom(1, 2, 4, 6, 5).unwrap()
    }

    fn tiny() -> ModelWeights {
        let cfg = tiny_cfg();
        let (d, m, v) = (cfg.d_model, cfg.d_mlp, cfg.vocab_size);
        let mat = |r, c, k: f32| {
            Arc::new(Array2::from_shape_fn((r, c), |(i, j)| {
                k + (i * c + j) as f32 * 0.01
            }))
        };
        let vec = |n, k: f32| Arc::new(Array1::from_elem(n, k));
        ModelWeights {
            wte: mat(v, d, 0.0),
            wpe: mat(cfg.n_ctx, d, 0.5),
            blocks: vec![Block {
                ln1: LayerNormParams::identity(d),
                w_qkv: mat(d, 3 * d, 0.1),
                b_qkv: vec(3 * d, 0.0),
                w_o: mat(d, d, 0.2),
                b_o: vec(d, 0.1),
                ln2: LayerNormParams::identity(d),
                w_in: mat(d, m, 0.3),
                b_in: vec(m, 0.0),
                w_out: mat(m, d, 0.4),
                b_out: vec(d, 0.0),
            }],
            ln_f: LayerNormParams::identity(d),
            config: cfg,
        }
    }

    #[test]
    fn save_load_round_trip() {
        let w = tiny();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.safetensors");
        w.save(&p).unwrap();
        let back = ModelWeights::load(&p, &w.config).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn missing_tensor_is_named() {
        let w = tiny();
        let views: Vec<(String, Vec<usize>, Vec<u8>)> = tensor_names(&w.config)
            .into_iter()
            .filter(|(n, _)| n != "h.0.attn.c_proj.weight" && n != "ln_f.bias")
            .map(|(n, s)| {
                let b = w
                    .tensor_by_name(&n)
                    .unwrap()
                    .iter()
                    .flat_map(|x| x.to_le_bytes())
                    .collect();
                (n, s, b)
            })
            .collect();
        let tv: Vec<_> = views
            .iter()
            .map(|(n, s, b)| {
                (
                    n.clone(),
                    safetensors::tensor::TensorView::new(Dtype::F32, s.clone(), b).unwrap(),
                )
            })
            .collect();
        let bytes = safetensors::serialize(tv, &None).unwrap();
        match ModelWeights::from_bytes(&bytes, &w.config) {
            Err(Error::MissingTensor(n)) => assert_eq!(n, "h.0.attn.c_proj.weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_and_non_finite_are_reported() {
        let w = tiny();
        let mut bad = tiny();
        Arc::make_mut(&mut bad.blocks[0].b_out)[1] = f32::NAN;
        assert!(matches!(bad.validate(), Err(Error::NonFinite(n)) if n == "h.0.mlp.c_proj.bias"));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.safetensors");
        w.save(&p).unwrap();
        let mut other = w.config.clone();
        other.vocab_size = 7;
        assert!(matches!(
            ModelWeights::load(&p, &other),
            Err(Error::ShapeMismatch { name, .. }) if name == "wte.weight"
        ));
    }

    #[test]
    fn prefixed_names_are_accepted() {
        let w = tiny();
        let owned: Vec<(String, Vec<usize>, Vec<u8>)> = tensor_names(&w.config)
            .into_iter()
            .map(|(n, s)| {
                let b = w
                    .tensor_by_name(&n)
                    .unwrap()
                    .iter()
                    .flat_map(|x| x.to_le_bytes())
                    .collect();
                (format!("transformer.{n}"), s, b)
            })
            .collect();
        let tv: Vec<_> = owned
            .iter()
            .map(|(n, s, b)| {
                (
                    n.clone(),
                    safetensors::tensor::TensorView::new(Dtype::F32, s.clone(), b).unwrap(),
                )
            })
            .collect();
        let bytes = safetensors::serialize(tv, &None).unwrap();
        assert_eq!(ModelWeights::from_bytes(&bytes, &w.config).unwrap(), w);
    }

    #[test]
    fn value_vector_edit_is_copy_on_write() {
        let w = tiny();
        let row = Array1::from_elem(w.config.d_model, 9.0);
        let e = w.with_value_vector(0, 3, row.view()).unwrap();
        assert_eq!(e.value_vector(0, 3).unwrap(), row.view());
        assert_ne!(w.value_vector(0, 3).unwrap(), row.view());
        assert!(Arc::ptr_eq(&w.wte, &e.wte));
        assert!(Arc::ptr_eq(&w.blocks[0].w_in, &e.blocks[0].w_in));
        assert!(!Arc::ptr_eq(&w.blocks[0].w_out, &e.blocks[0].w_out));
        assert!(w.with_value_vector(1, 0, row.view()).is_err());
        assert!(w.with_value_vector(0, 16, row.view()).is_err());
    }

    #[test]
    fn head_slices_have_expected_shapes() {
        let w = tiny();
        assert_eq!(w.w_q(0, 1).dim(), (4, 2));
        assert_eq!(w.w_v(0, 1)[[0, 0]], w.blocks[0].w_qkv[[0, 2 * 4 + 2]]);
        assert_eq!(w.w_o(0, 1).dim(), (2, 4));
        assert_eq!(w.w_o(0, 1)[[0, 0]], w.blocks[0].w_o[[2, 0]]);
    }
}
