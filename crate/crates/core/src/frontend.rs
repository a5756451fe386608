//! AnyRes grid partitioning, the stub vision encoder, the projection into the
//! text embedding space and the ego-context encoder.

use std::fmt;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::camera::{Camera, PseudoFrame, NUM_CLASSES};
use crate::scene::types::NavCommand;
use crate::tensor::{add_bias, bias_grad, gemm, Group, Init, Mat, ParamStore, TensorId};

/// Elementwise nonlinearity used by every MLP in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Ramp,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Ramp => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation.
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Ramp => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    /// Side of every square grid, in cells.
    pub grid_size: usize,
    /// Side of one encoder patch, in cells.
    pub patch: usize,
    pub d_v: usize,
    pub d_p: usize,
    pub activation: Activation,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self { grid_size: 16, patch: 4, d_v: 32, d_p: 64, activation: Activation::Ramp }
    }
}

impl FrontendConfig {
    /// Tokens per grid.
    pub fn l_v(&self) -> usize {
        (self.grid_size / self.patch).pow(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.patch == 0 || self.d_v == 0 || self.d_p == 0 {
            return Err(Error::Config("frontend dims must be positive".into()));
        }
        if !self.grid_size.is_multiple_of(self.patch) {
            return Err(Error::Config(format!("grid_size {} not divisible by patch {}", self.grid_size, self.patch)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    FarLeft,
    FarRight,
    NearLeft,
    NearRight,
}

impl Quadrant {
    /// Raster order: row 0 of a frame is the far edge, column 0 the left edge.
    pub const ALL: [Quadrant; 4] = [Quadrant::FarLeft, Quadrant::FarRight, Quadrant::NearLeft, Quadrant::NearRight];

    fn origin(self) -> (usize, usize) {
        match self {
            Quadrant::FarLeft => (0, 0),
            Quadrant::FarRight => (0, 1),
            Quadrant::NearLeft => (1, 0),
            Quadrant::NearRight => (1, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridTag {
    View(Camera),
    FrontSub(Quadrant),
}

impl GridTag {
    pub fn is_front(self) -> bool {
        matches!(self, GridTag::View(Camera::Front) | GridTag::FrontSub(_))
    }

    pub fn tag(self) -> &'static str {
        match self {
            GridTag::View(c) => c.tag(),
            GridTag::FrontSub(Quadrant::FarLeft) => "CAM_FRONT_FAR_LEFT",
            GridTag::FrontSub(Quadrant::FarRight) => "CAM_FRONT_FAR_RIGHT",
            GridTag::FrontSub(Quadrant::NearLeft) => "CAM_FRONT_NEAR_LEFT",
            GridTag::FrontSub(Quadrant::NearRight) => "CAM_FRONT_NEAR_RIGHT",
        }
    }

    /// Every tag the partitioner can emit.
    pub fn all() -> Vec<GridTag> {
        let mut v: Vec<GridTag> = Camera::ALL.iter().map(|&c| GridTag::View(c)).collect();
        v.extend(Quadrant::ALL.iter().map(|&q| GridTag::FrontSub(q)));
        v
    }
}

impl fmt::Display for GridTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Square class-id raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub tag: GridTag,
    pub size: usize,
    pub cells: Vec<u8>,
}

fn resize_nearest(cells: &[u8], width: usize, r0: usize, c0: usize, h: usize, w: usize, size: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        let sr = r0 + r * h / size;
        for c in 0..size {
            out.push(cells[sr * width + c0 + c * w / size]);
        }
    }
    out
}

/// Resized views in canonical camera order followed by the four front
/// quadrants.
pub fn anyres_partition(frames: &[PseudoFrame], grid_size: usize) -> Result<Vec<Grid>> {
    if grid_size == 0 {
        return Err(Error::Config("grid_size must be positive".into()));
    }
    let mut views: Vec<&PseudoFrame> = frames.iter().collect();
    views.sort_by_key(|f| f.camera.index());
    for pair in views.windows(2) {
        if pair[0].camera == pair[1].camera {
            return Err(Error::ShapeMismatch(format!("duplicate camera {}", pair[0].camera.tag())));
        }
    }
    for f in &views {
        if f.cells.len() != f.width * f.height || f.width < 2 || f.height < 2 {
            return Err(Error::ShapeMismatch(format!("{} raster is {}x{}", f.camera.tag(), f.height, f.width)));
        }
    }
    let front = *views.iter().find(|f| f.camera == Camera::Front).ok_or(Error::MissingFrontCamera)?;
    let mut grids: Vec<Grid> = views
        .iter()
        .map(|f| Grid {
            tag: GridTag::View(f.camera),
            size: grid_size,
            cells: resize_nearest(&f.cells, f.width, 0, 0, f.height, f.width, grid_size),
        })
        .collect();
    let (qh, qw) = (front.height / 2, front.width / 2);
    for q in Quadrant::ALL {
        let (qr, qc) = q.origin();
        grids.push(Grid {
            tag: GridTag::FrontSub(q),
            size: grid_size,
            cells: resize_nearest(&front.cells, front.width, qr * qh, qc * qw, qh, qw, grid_size),
        });
    }
    Ok(grids)
}

/// Encoder output for one grid: `L_v x D_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub index: usize,
    pub tag: GridTag,
    pub features: Mat,
}

/// Projected tokens of every grid stacked row-wise, `L_v` rows per grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFeatures {
    pub tags: Vec<GridTag>,
    pub l_v: usize,
    pub tokens: Mat,
}

impl ProjectedFeatures {
    pub fn grid_count(&self) -> usize {
        self.tags.len()
    }

    pub fn grid(&self, g: usize) -> &[f64] {
        let w = self.l_v * self.tokens.cols;
        &self.tokens.data[g * w..(g + 1) * w]
    }

    /// Row ranges of all front-derived grids.
    pub fn front_span(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for (g, t) in self.tags.iter().enumerate() {
            if !t.is_front() {
                continue;
            }
            let r = g * self.l_v..(g + 1) * self.l_v;
            match out.last_mut() {
                Some(last) if last.end == r.start => last.end = r.end,
                _ => out.push(r),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEmbedding(pub Vec<f64>);

/// Width of the context input: speed, acceleration, one-hot command.
pub const CONTEXT_INPUTS: usize = 2 + NavCommand::ALL.len();

pub fn context_inputs(v: f64, a: f64, cmd: NavCommand) -> Result<[f64; CONTEXT_INPUTS]> {
    if !v.is_finite() {
        return Err(Error::NonFinite("speed"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("acceleration"));
    }
    let mut x = [0.0; CONTEXT_INPUTS];
    x[0] = v;
    x[1] = a;
    x[2 + cmd.index()] = 1.0;
    Ok(x)
}

/// Handles of the frontend tensors inside a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Frontend {
    pub cfg: FrontendConfig,
    embed: TensorId,
    pos: TensorId,
    mix: TensorId,
    mix_b: TensorId,
    proj_w1: TensorId,
    proj_b1: TensorId,
    proj_w2: TensorId,
    proj_b2: TensorId,
    ctx_w1: TensorId,
    ctx_b1: TensorId,
    ctx_w2: TensorId,
    ctx_b2: TensorId,
}

/// Intermediate values of a batched visual pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct VisualCache {
    grids: Vec<Grid>,
    rows: usize,
    embedded: Vec<f64>,
    features: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ContextCache {
    x: [f64; CONTEXT_INPUTS],
    pre: Vec<f64>,
    act: Vec<f64>,
}

const FRONTEND_TENSORS: [(&str, Group); 12] = [
    ("enc.embed", Group::Encoder),
    ("enc.pos", Group::Encoder),
    ("enc.mix", Group::Encoder),
    ("enc.mix_b", Group::Encoder),
    ("proj.w1", Group::Projection),
    ("proj.b1", Group::Projection),
    ("proj.w2", Group::Projection),
    ("proj.b2", Group::Projection),
    ("ctx.w1", Group::ContextEncoder),
    ("ctx.b1", Group::ContextEncoder),
    ("ctx.w2", Group::ContextEncoder),
    ("ctx.b2", Group::ContextEncoder),
];

impl Frontend {
    fn shapes(cfg: &FrontendConfig) -> [Vec<usize>; 12] {
        let p2 = cfg.patch * cfg.patch;
        [
            vec![p2 * NUM_CLASSES, cfg.d_v],
            vec![cfg.l_v(), cfg.d_v],
            vec![cfg.d_v, cfg.d_v],
            vec![cfg.d_v],
            vec![cfg.d_v, cfg.d_p],
            vec![cfg.d_p],
            vec![cfg.d_p, cfg.d_p],
            vec![cfg.d_p],
            vec![CONTEXT_INPUTS, cfg.d_p],
            vec![cfg.d_p],
            vec![cfg.d_p, cfg.d_p],
            vec![cfg.d_p],
        ]
    }

    fn from_ids(cfg: FrontendConfig, ids: &[TensorId]) -> Self {
        Self {
            cfg,
            embed: ids[0],
            pos: ids[1],
            mix: ids[2],
            mix_b: ids[3],
            proj_w1: ids[4],
            proj_b1: ids[5],
            proj_w2: ids[6],
            proj_b2: ids[7],
            ctx_w1: ids[8],
            ctx_b1: ids[9],
            ctx_w2: ids[10],
            ctx_b2: ids[11],
        }
    }

    /// Adds freshly initialised frontend tensors to `store`.
    pub fn register<R: Rng>(cfg: FrontendConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let shapes = Self::shapes(&cfg);
        let mut ids = Vec::new();
        for ((name, group), shape) in FRONTEND_TENSORS.iter().zip(shapes.iter()) {
            let init = if shape.len() == 1 {
                Init::Zeros
            } else {
                Init::Normal(1.0 / (shape[0] as f64).sqrt())
            };
            ids.push(store.add(name, shape, *group, init, rng));
        }
        Ok(Self::from_ids(cfg, &ids))
    }

    /// Looks up existing frontend tensors, checking their shapes.
    pub fn bind(cfg: FrontendConfig, store: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        let shapes = Self::shapes(&cfg);
        let mut ids = Vec::new();
        for ((name, _), shape) in FRONTEND_TENSORS.iter().zip(shapes.iter()) {
            let id = store.id(name).ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))?;
            if &store.spec(id).shape != shape {
                return Err(Error::ShapeMismatch(format!("{name} has shape {:?}, expected {shape:?}", store.spec(id).shape)));
            }
            ids.push(id);
        }
        Ok(Self::from_ids(cfg, &ids))
    }

    fn check_grid(&self, g: &Grid) -> Result<()> {
        let n = self.cfg.grid_size;
        if g.size != n || g.cells.len() != n * n {
            return Err(Error::ShapeMismatch(format!("grid {} is {}x{}, expected {n}x{n}", g.tag, g.size, g.size)));
        }
        if let Some(c) = g.cells.iter().find(|&&c| c as usize >= NUM_CLASSES) {
            return Err(Error::ShapeMismatch(format!("class id {c} out of range")));
        }
        Ok(())
    }

    /// Table rows summed for each patch token, grid-major.
    fn embed_lookup(&self, g: &Grid) -> Vec<(usize, usize)> {
        let n = self.cfg.grid_size;
        let p = self.cfg.patch;
        let per = n / p;
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let token = (r / p) * per + c / p;
                let cell = (r % p) * p + c % p;
                out.push((token, cell * NUM_CLASSES + g.cells[r * n + c] as usize));
            }
        }
        out
    }

    /// Stub encoder, projection and all caches for a list of grids.
    pub fn visual_forward(&self, store: &ParamStore, grids: &[Grid]) -> Result<(ProjectedFeatures, VisualCache)> {
        for g in grids {
            self.check_grid(g)?;
        }
        let (lv, dv, dp) = (self.cfg.l_v(), self.cfg.d_v, self.cfg.d_p);
        let rows = grids.len() * lv;
        let embed = store.get(self.embed);
        let pos = store.get(self.pos);
        let mut embedded = vec![0.0; rows * dv];
        for (gi, g) in grids.iter().enumerate() {
            let base = gi * lv;
            for t in 0..lv {
                embedded[(base + t) * dv..(base + t + 1) * dv].copy_from_slice(&pos[t * dv..(t + 1) * dv]);
            }
            for (t, e) in self.embed_lookup(g) {
                let dst = &mut embedded[(base + t) * dv..(base + t + 1) * dv];
                for (d, s) in dst.iter_mut().zip(&embed[e * dv..(e + 1) * dv]) {
                    *d += s;
                }
            }
        }
        let mut features = vec![0.0; rows * dv];
        gemm(rows, dv, dv, 1.0, &embedded, false, store.get(self.mix), false, 0.0, &mut features);
        add_bias(&mut features, store.get(self.mix_b));
        let (pre, act, out) = self.project_rows(store, &features, rows)?;
        let pf = ProjectedFeatures { tags: grids.iter().map(|g| g.tag).collect(), l_v: lv, tokens: Mat::from_vec(rows, dp, out) };
        Ok((pf, VisualCache { grids: grids.to_vec(), rows, embedded, features, pre, act }))
    }

    fn project_rows(&self, store: &ParamStore, x: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (dv, dp) = (self.cfg.d_v, self.cfg.d_p);
        if x.len() != rows * dv {
            return Err(Error::ShapeMismatch(format!("projection input has {} values, expected {}", x.len(), rows * dv)));
        }
        let mut pre = vec![0.0; rows * dp];
        gemm(rows, dv, dp, 1.0, x, false, store.get(self.proj_w1), false, 0.0, &mut pre);
        add_bias(&mut pre, store.get(self.proj_b1));
        let act: Vec<f64> = pre.iter().map(|&v| self.cfg.activation.apply(v)).collect();
        let mut out = vec![0.0; rows * dp];
        gemm(rows, dp, dp, 1.0, &act, false, store.get(self.proj_w2), false, 0.0, &mut out);
        add_bias(&mut out, store.get(self.proj_b2));
        Ok((pre, act, out))
    }

    /// Accumulates parameter gradients given `d_tokens`, the gradient of the
    /// projected tokens.
    pub fn visual_backward(&self, store: &ParamStore, cache: &VisualCache, d_tokens: &[f64], grads: &mut ParamStore) {
        let (lv, dv, dp) = (self.cfg.l_v(), self.cfg.d_v, self.cfg.d_p);
        let rows = cache.rows;
        debug_assert_eq!(d_tokens.len(), rows * dp);
        gemm(dp, rows, dp, 1.0, &cache.act, true, d_tokens, false, 1.0, grads.get_mut(self.proj_w2));
        bias_grad(d_tokens, grads.get_mut(self.proj_b2));
        let mut d_pre = vec![0.0; rows * dp];
        gemm(rows, dp, dp, 1.0, d_tokens, false, store.get(self.proj_w2), true, 0.0, &mut d_pre);
        for (g, &p) in d_pre.iter_mut().zip(&cache.pre) {
            *g *= self.cfg.activation.grad(p);
        }
        gemm(dv, rows, dp, 1.0, &cache.features, true, &d_pre, false, 1.0, grads.get_mut(self.proj_w1));
        bias_grad(&d_pre, grads.get_mut(self.proj_b1));
        let mut d_feat = vec![0.0; rows * dv];
        gemm(rows, dp, dv, 1.0, &d_pre, false, store.get(self.proj_w1), true, 0.0, &mut d_feat);
        gemm(dv, rows, dv, 1.0, &cache.embedded, true, &d_feat, false, 1.0, grads.get_mut(self.mix));
        bias_grad(&d_feat, grads.get_mut(self.mix_b));
        let mut d_emb = vec![0.0; rows * dv];
        gemm(rows, dv, dv, 1.0, &d_feat, false, store.get(self.mix), true, 0.0, &mut d_emb);
        {
            let gpos = grads.get_mut(self.pos);
            for (r, row) in d_emb.chunks(dv).enumerate() {
                let t = r % lv;
                for (g, v) in gpos[t * dv..(t + 1) * dv].iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        let gemb = grads.get_mut(self.embed);
        for (gi, g) in cache.grids.iter().enumerate() {
            for (t, e) in self.embed_lookup(g) {
                let src = &d_emb[(gi * lv + t) * dv..(gi * lv + t + 1) * dv];
                for (d, s) in gemb[e * dv..(e + 1) * dv].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }

    /// Stub vision encoder for one grid.
    pub fn encode_grid(&self, store: &ParamStore, index: usize, grid: &Grid) -> Result<FeatureGrid> {
        let (_, cache) = self.visual_forward(store, std::slice::from_ref(grid))?;
        Ok(FeatureGrid { index, tag: grid.tag, features: Mat::from_vec(self.cfg.l_v(), self.cfg.d_v, cache.features) })
    }

    /// Two-layer projection of one grid's features.
    pub fn project(&self, store: &ParamStore, fg: &FeatureGrid) -> Result<Mat> {
        if fg.features.cols != self.cfg.d_v {
            return Err(Error::ShapeMismatch(format!("feature dim {} != {}", fg.features.cols, self.cfg.d_v)));
        }
        let (_, _, out) = self.project_rows(store, &fg.features.data, fg.features.rows)?;
        Ok(Mat::from_vec(fg.features.rows, self.cfg.d_p, out))
    }

    /// Partitions, encodes and projects one set of camera frames.
    pub fn encode_frames(&self, store: &ParamStore, frames: &[PseudoFrame]) -> Result<(ProjectedFeatures, VisualCache)> {
        let grids = anyres_partition(frames, self.cfg.grid_size)?;
        self.visual_forward(store, &grids)
    }

    pub fn context_forward(&self, store: &ParamStore, v: f64, a: f64, cmd: NavCommand) -> Result<(ContextEmbedding, ContextCache)> {
        let x = context_inputs(v, a, cmd)?;
        let dp = self.cfg.d_p;
        let mut pre = store.get(self.ctx_b1).to_vec();
        gemm(1, CONTEXT_INPUTS, dp, 1.0, &x, false, store.get(self.ctx_w1), false, 1.0, &mut pre);
        let act: Vec<f64> = pre.iter().map(|&v| self.cfg.activation.apply(v)).collect();
        let mut out = store.get(self.ctx_b2).to_vec();
        gemm(1, dp, dp, 1.0, &act, false, store.get(self.ctx_w2), false, 1.0, &mut out);
        Ok((ContextEmbedding(out), ContextCache { x, pre, act }))
    }

    pub fn encode_context(&self, store: &ParamStore, v: f64, a: f64, cmd: NavCommand) -> Result<ContextEmbedding> {
        Ok(self.context_forward(store, v, a, cmd)?.0)
    }

    pub fn context_backward(&self, store: &ParamStore, cache: &ContextCache, d_out: &[f64], grads: &mut ParamStore) {
        let dp = self.cfg.d_p;
        gemm(dp, 1, dp, 1.0, &cache.act, true, d_out, false, 1.0, grads.get_mut(self.ctx_w2));
        bias_grad(d_out, grads.get_mut(self.ctx_b2));
        let mut d_pre = vec![0.0; dp];
        gemm(1, dp, dp, 1.0, d_out, false, store.get(self.ctx_w2), true, 0.0, &mut d_pre);
        for (g, &p) in d_pre.iter_mut().zip(&cache.pre) {
            *g *= self.cfg.activation.grad(p);
        }
        gemm(CONTEXT_INPUTS, 1, dp, 1.0, &cache.x, true, &d_pre, false, 1.0, grads.get_mut(self.ctx_w1));
        bias_grad(&d_pre, grads.get_mut(self.ctx_b1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(camera: Camera, f: impl Fn(usize, usize) -> u8) -> PseudoFrame {
        let (w, h) = (32, 32);
        let cells = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        PseudoFrame { camera, width: w, height: h, cells }
    }

    fn six() -> Vec<PseudoFrame> {
        Camera::ALL.iter().map(|&c| frame(c, |r, col| ((r * 7 + col * 3 + c.index()) % NUM_CLASSES) as u8)).collect()
    }

    fn small_cfg() -> FrontendConfig {
        FrontendConfig { grid_size: 4, patch: 2, d_v: 3, d_p: 5, activation: Activation::Tanh }
    }

    fn setup(cfg: FrontendConfig, seed: u64) -> (Frontend, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let fe = Frontend::register(cfg, &mut store, &mut rng).unwrap();
        for v in store.data.iter_mut() {
            if *v == 0.0 {
                *v = 0.1 * rng.gen_range(-1.0..1.0);
            }
        }
        (fe, store)
    }

    #[test]
    fn six_views_make_ten_grids() {
        let grids = anyres_partition(&six(), 16).unwrap();
        assert_eq!(grids.len(), 10);
        assert_eq!(grids[0].tag, GridTag::View(Camera::Front));
        assert_eq!(grids[6].tag, GridTag::FrontSub(Quadrant::FarLeft));
    }

    #[test]
    fn quadrants_tile_front() {
        let frames = six();
        let grids = anyres_partition(&frames, 16).unwrap();
        let front = &frames[0];
        for (qi, q) in Quadrant::ALL.iter().enumerate() {
            let (qr, qc) = q.origin();
            let g = &grids[6 + qi];
            for r in 0..16 {
                for c in 0..16 {
                    assert_eq!(g.cells[r * 16 + c], front.get(qr * 16 + r, qc * 16 + c));
                }
            }
        }
    }

    #[test]
    fn missing_front_is_error() {
        let frames: Vec<_> = six().into_iter().skip(1).collect();
        assert!(matches!(anyres_partition(&frames, 16), Err(Error::MissingFrontCamera)));
    }

    #[test]
    fn zero_params_empty_grid_give_zero() {
        let cfg = FrontendConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let fe = Frontend::register(cfg.clone(), &mut store, &mut rng).unwrap();
        store.fill(0.0);
        let g = Grid { tag: GridTag::View(Camera::Front), size: 16, cells: vec![0; 256] };
        let f = fe.encode_grid(&store, 0, &g).unwrap();
        assert!(f.features.data.iter().all(|&v| v == 0.0));
        let c = fe.encode_context(&store, 3.0, 1.0, NavCommand::Left).unwrap();
        assert!(c.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_projection_passes_nonnegative_input() {
        let cfg = FrontendConfig { grid_size: 4, patch: 2, d_v: 6, d_p: 6, activation: Activation::Ramp };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let fe = Frontend::register(cfg, &mut store, &mut rng).unwrap();
        store.fill(0.0);
        for name in ["proj.w1", "proj.w2"] {
            let id = store.id(name).unwrap();
            let w = store.get_mut(id);
            for i in 0..6 {
                w[i * 6 + i] = 1.0;
            }
        }
        let features = Mat::from_vec(4, 6, (0..24).map(|i| i as f64 * 0.5).collect());
        let fg = FeatureGrid { index: 0, tag: GridTag::View(Camera::Front), features: features.clone() };
        assert_eq!(fe.project(&store, &fg).unwrap(), features);
    }

    #[test]
    fn different_inputs_differ() {
        let (fe, store) = setup(FrontendConfig::default(), 5);
        let a = Grid { tag: GridTag::View(Camera::Front), size: 16, cells: vec![0; 256] };
        let mut b = a.clone();
        b.cells[17] = 2;
        assert_ne!(fe.encode_grid(&store, 0, &a).unwrap(), fe.encode_grid(&store, 0, &b).unwrap());
        let x = fe.encode_context(&store, 5.0, 0.0, NavCommand::Left).unwrap();
        let y = fe.encode_context(&store, 5.0, 0.0, NavCommand::Right).unwrap();
        assert_ne!(x, y);
    }

    fn probe(fe: &Frontend, store: &ParamStore, grids: &[Grid], w: &[f64]) -> f64 {
        let (pf, _) = fe.visual_forward(store, grids).unwrap();
        let c = fe.encode_context(store, 4.0, -0.5, NavCommand::Straight).unwrap();
        pf.tokens.data.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + c.0.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = small_cfg();
        let (fe, mut store) = setup(cfg.clone(), 11);
        let frames: Vec<PseudoFrame> = Camera::ALL
            .iter()
            .map(|&c| PseudoFrame {
                camera: c,
                width: 4,
                height: 4,
                cells: (0..16).map(|i| ((i * 5 + c.index()) % NUM_CLASSES) as u8).collect(),
            })
            .collect();
        let grids = anyres_partition(&frames, cfg.grid_size).unwrap();
        let rows = grids.len() * cfg.l_v();
        let w: Vec<f64> = (0..rows * cfg.d_p).map(|i| ((i as f64) * 0.73).sin()).collect();
        let (_, cache) = fe.visual_forward(&store, &grids).unwrap();
        let (_, ccache) = fe.context_forward(&store, 4.0, -0.5, NavCommand::Straight).unwrap();
        let mut grads = store.zeros_like();
        fe.visual_backward(&store, &cache, &w, &mut grads);
        fe.context_backward(&store, &ccache, &w[..cfg.d_p], &mut grads);
        let eps = 1e-5;
        for i in 0..store.len() {
            let orig = store.data[i];
            store.data[i] = orig + eps;
            let up = probe(&fe, &store, &grids, &w);
            store.data[i] = orig - eps;
            let down = probe(&fe, &store, &grids, &w);
            store.data[i] = orig;
            let num = (up - down) / (2.0 * eps);
            let ana = grads.data[i];
            let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: numeric {num} analytic {ana}");
        }
    }
}
