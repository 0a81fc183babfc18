//! Shared fixtures, independent reference implementations and checks used
//! by the integration tests and the acceptance report.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ferret_core::featmap::FeatureMap;
use ferret_core::geometry::{iou, rasterize, BBox, BinaryMask, ImageSize, Region};
use ferret_core::grit::{self, balance, convert_all, ConvertOptions, InstructionSample, MiningType, Polarity, Task};
use ferret_core::grounding::metrics::{
    eval_grounded_caption, eval_phrase_grounding, eval_pope, eval_rec, match_refer_answer, rec_correct,
    GroundedCaptionSample, GtObject, GtPhrase, PhraseGroundingSample, RecSample,
};
use ferret_core::grounding::{parse_grounded_text, GroundedText, GroundedTextBuilder};
use ferret_core::quantizer::{
    dequantize, encode_region_text, quantize, region_bins, BinBox, BinCoords, HybridRegionToken, QuantizerConfig,
    SPE_TOKEN,
};
use ferret_core::sampler::rng::{SplitRng, STREAM_FPS, STREAM_POINTS};
use ferret_core::sampler::{
    block_forward_with_centers, fps, fps_from, BlockParams, Linear, PointSet, SamplerConfig, SamplerParams,
    SpatialSampler,
};

/// Test-side random source on its own stream family.
pub struct Gen(SplitRng);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self(SplitRng::new(seed, 0xdead_beef))
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.index(n)
    }

    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.0.index(hi - lo + 1)
    }

    pub fn unit(&mut self) -> f64 {
        self.0.uniform()
    }

    pub fn span(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.uniform()
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.0.uniform() < p
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ------------------------------------------------------------ fixtures

/// The hand-traced block: 4 points on a 4x4 extent with 2 channels.
pub fn hand_trace_points() -> PointSet {
    PointSet::new(
        vec![[0.0, 0.0], [1.0, 0.0], [4.0, 4.0], [3.0, 4.0]],
        [4.0, 4.0],
        2,
        vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 1.0, -1.0],
    )
    .unwrap()
}

pub fn hand_trace_params() -> BlockParams {
    BlockParams {
        theta: Linear {
            in_dim: 4,
            out_dim: 2,
            weight: vec![1.0, 2.0, 0.0, 4.0, -1.0, 0.0, 2.0, 0.0],
            bias: vec![0.5, -0.5],
        },
        sigma: Linear {
            in_dim: 6,
            out_dim: 2,
            weight: vec![1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 3.0],
            bias: vec![0.0, 1.0],
        },
    }
}

/// Recorded values: centers, kNN lists, `h_ik` per center and the pooled `h_i`.
pub struct HandTrace {
    pub centers: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
    pub fused: Vec<Vec<[f64; 2]>>,
    pub pooled: Vec<[f64; 2]>,
    pub argmax: Vec<usize>,
}

pub fn hand_trace_expected() -> HandTrace {
    HandTrace {
        centers: vec![0, 2],
        neighbors: vec![vec![0, 1], vec![2, 3]],
        fused: vec![vec![[1.5, 1.5], [2.5, 0.0]], vec![[4.5, 6.5], [-2.5, 6.0]]],
        pooled: vec![[2.5, 1.5], [4.5, 6.5]],
        argmax: vec![1, 0, 0, 0],
    }
}

/// Compares the library block against the recorded trace; returns the
/// largest absolute deviation.
pub fn check_hand_trace() -> Result<f64, String> {
    let pts = hand_trace_points();
    let exp = hand_trace_expected();
    let centers = fps_from(&pts, 2, 0).map_err(|e| e.to_string())?;
    if centers != exp.centers {
        return Err(format!("centers {centers:?}"));
    }
    let (out, trace) = block_forward_with_centers(&pts, 2, &hand_trace_params(), centers).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (i, nbs) in exp.neighbors.iter().enumerate() {
        if trace.neighbors_of(i) != nbs.as_slice() {
            return Err(format!("neighbors of {i}: {:?}", trace.neighbors_of(i)));
        }
        for (j, h) in exp.fused[i].iter().enumerate() {
            for (a, b) in trace.fused_at(i, j, 2).iter().zip(h) {
                worst = worst.max((a - b).abs());
            }
        }
        for (a, b) in out.feature(i).iter().zip(&exp.pooled[i]) {
            worst = worst.max((a - b).abs());
        }
    }
    if trace.argmax != exp.argmax {
        return Err(format!("argmax {:?}", trace.argmax));
    }
    if worst > 1e-12 {
        return Err(format!("deviation {worst:e}"));
    }
    Ok(worst)
}

pub struct TinyFixture {
    pub cfg: SamplerConfig,
    pub mask: BinaryMask,
    pub fmap: FeatureMap,
    pub params: SamplerParams,
}

/// C=3, N=16, r=2, k=3, two blocks, D=5 on a quadrilateral in a 12x10 image.
pub fn tiny_fixture(seed: u64) -> TinyFixture {
    let cfg = SamplerConfig::tiny();
    let mask = rasterize(
        &Region::polygon(vec![[1.0, 1.0], [10.0, 2.0], [9.0, 9.0], [2.0, 8.0]]),
        ImageSize::new(12, 10),
    )
    .unwrap();
    TinyFixture {
        cfg,
        mask,
        fmap: FeatureMap::random(6, 8, 3, seed).unwrap(),
        params: SamplerParams::init(&cfg, seed),
    }
}

/// A random nonempty mask: union of a few rasterized shapes.
pub fn random_mask(g: &mut Gen, w: u32, h: u32) -> BinaryMask {
    let size = ImageSize::new(w, h);
    let (wf, hf) = (w as f64, h as f64);
    let mut bits = vec![false; (w * h) as usize];
    for _ in 0..g.range(1, 3) {
        let region = match g.below(4) {
            0 => Region::point(g.span(0.0, wf), g.span(0.0, hf)),
            1 => {
                let (x0, x1) = (g.span(0.0, wf), g.span(0.0, wf));
                let (y0, y1) = (g.span(0.0, hf), g.span(0.0, hf));
                Region::bbox(
                    x0.min(x1),
                    y0.min(y1),
                    x0.max(x1).max(x0.min(x1) + 1.0).min(wf),
                    y0.max(y1).max(y0.min(y1) + 1.0).min(hf),
                )
            }
            2 => Region::polygon((0..g.range(3, 6)).map(|_| [g.span(0.0, wf), g.span(0.0, hf)]).collect()),
            _ => Region::scribble(vec![(0..g.range(2, 5))
                .map(|_| [g.span(0.0, wf), g.span(0.0, hf)])
                .collect()]),
        };
        if let Ok(m) = rasterize(&region, size) {
            for (b, &v) in bits.iter_mut().zip(m.bits()) {
                *b |= v;
            }
        }
    }
    if !bits.iter().any(|&b| b) {
        let i = g.below(bits.len());
        bits[i] = true;
    }
    BinaryMask::from_bits(w, h, bits).unwrap()
}

// ------------------------------------------------- reference sampler

fn ref_dist2(a: [f64; 2], b: [f64; 2], extent: [f64; 2]) -> f64 {
    let dx = (a[0] - b[0]) / extent[0];
    let dy = (a[1] - b[1]) / extent[1];
    dx * dx + dy * dy
}

/// Step-by-step greedy trace: recompute every candidate's distance to the
/// whole selected set at each step, take the farthest, lowest index first.
pub fn ref_fps(positions: &[[f64; 2]], extent: [f64; 2], m: usize, start: usize) -> Vec<usize> {
    let mut selected = vec![start];
    while selected.len() < m {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..positions.len() {
            if selected.contains(&i) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| ref_dist2(positions[i], positions[s], extent))
                .fold(f64::INFINITY, f64::min);
            match best {
                Some((_, bd)) if d <= bd => {}
                _ => best = Some((i, d)),
            }
        }
        selected.push(best.unwrap().0);
    }
    selected
}

fn ref_linear(l: &Linear, x: &[f64]) -> Vec<f64> {
    (0..l.out_dim)
        .map(|o| (0..l.in_dim).map(|i| l.weight[o * l.in_dim + i] * x[i]).sum::<f64>() + l.bias[o])
        .collect()
}

fn ref_bilinear(fmap: &FeatureMap, gx: f64, gy: f64) -> Vec<f64> {
    let (w, h, c) = (fmap.width(), fmap.height(), fmap.channels());
    let lo = |t: f64, n: usize| {
        if n == 1 {
            (0, 0, 0.0)
        } else {
            let l = (t.floor() as usize).min(n - 2);
            (l, l + 1, t - l as f64)
        }
    };
    let (x0, x1, fx) = lo(gx, w);
    let (y0, y1, fy) = lo(gy, h);
    let d = fmap.data();
    let at = |x: usize, y: usize, k: usize| d[(y * w + x) * c + k];
    (0..c)
        .map(|k| {
            (1.0 - fx) * (1.0 - fy) * at(x0, y0, k)
                + fx * (1.0 - fy) * at(x1, y0, k)
                + (1.0 - fx) * fy * at(x0, y1, k)
                + fx * fy * at(x1, y1, k)
        })
        .collect()
}

/// Straight-line forward pass written from the algorithm description.
pub fn reference_forward(
    mask: &BinaryMask,
    fmap: &FeatureMap,
    cfg: &SamplerConfig,
    params: &SamplerParams,
    seed: u64,
) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let extent = [w as f64, h as f64];
    let mut pool = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                pool.push([x as f64 + 0.5, y as f64 + 0.5]);
            }
        }
    }
    let mut rng = SplitRng::new(seed, STREAM_POINTS);
    let mut pos: Vec<[f64; 2]> = if pool.len() < cfg.n_points {
        (0..cfg.n_points).map(|_| pool[rng.index(pool.len())]).collect()
    } else {
        for i in 0..cfg.n_points {
            let j = i + rng.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool[..cfg.n_points].to_vec()
    };
    let (fw, fh) = (fmap.width() as f64, fmap.height() as f64);
    let mut feat: Vec<Vec<f64>> = pos
        .iter()
        .map(|p| {
            let gx = (p[0] / extent[0] * fw - 0.5).clamp(0.0, fw - 1.0);
            let gy = (p[1] / extent[1] * fh - 0.5).clamp(0.0, fh - 1.0);
            ref_bilinear(fmap, gx, gy)
        })
        .collect();
    let coord = |p: [f64; 2]| [p[0] / extent[0], p[1] / extent[1]];
    let c = cfg.channels;

    for (b, bp) in params.blocks.iter().enumerate() {
        let n = pos.len();
        let start = SplitRng::new(seed, STREAM_FPS + b as u64).index(n);
        let centers = ref_fps(&pos, extent, n / cfg.ratio, start);
        let mut new_feat = Vec::new();
        for &ci in &centers {
            let mut order: Vec<(f64, usize)> = (0..n).map(|j| (ref_dist2(pos[ci], pos[j], extent), j)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut pooled = vec![f64::NEG_INFINITY; c];
            for &(_, nb) in order.iter().take(cfg.k) {
                let (cc, cn) = (coord(pos[ci]), coord(pos[nb]));
                let mut u: Vec<f64> = (0..c).map(|k| feat[nb][k] - feat[ci][k]).collect();
                u.extend([cn[0] - cc[0], cn[1] - cc[1]]);
                let mut v = ref_linear(&bp.theta, &u);
                v.extend_from_slice(&feat[ci]);
                v.extend(cc);
                let hij = ref_linear(&bp.sigma, &v);
                for k in 0..c {
                    if hij[k] > pooled[k] {
                        pooled[k] = hij[k];
                    }
                }
            }
            new_feat.push(pooled);
        }
        pos = centers.iter().map(|&i| pos[i]).collect();
        feat = new_feat;
    }
    let flat: Vec<f64> = feat.concat();
    ref_linear(&params.projection, &flat)
}

/// Largest relative deviation between the library and the reference over
/// `cases` random seeds on the tiny configuration.
pub fn check_reference_sampler(cases: u64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..cases {
        let f = tiny_fixture(seed);
        let s = SpatialSampler::new(f.cfg, f.params.clone()).unwrap();
        let (got, _) = s.forward(&f.mask, &f.fmap, seed * 31 + 7).unwrap();
        let want = reference_forward(&f.mask, &f.fmap, &f.cfg, &f.params, seed * 31 + 7);
        for (a, b) in got.0.iter().zip(&want) {
            let d = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            worst = worst.max(d);
        }
    }
    if worst > 1e-12 {
        return Err(format!("reference deviation {worst:e}"));
    }
    Ok(worst)
}

// -------------------------------------------------------- grad check

pub struct GradReport {
    pub checked: usize,
    pub skipped_ties: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

fn objective(s: &SpatialSampler, f: &TinyFixture, fmap: &FeatureMap, seed: u64, up: &[f64]) -> (f64, Vec<usize>) {
    let (out, tape) = s.forward(&f.mask, fmap, seed).unwrap();
    (out.0.iter().zip(up).map(|(a, b)| a * b).sum(), tape.argmax_pattern())
}

/// Central differences with step `h` against analytic gradients of
/// `upstream . output`, for every parameter and every feature-map value.
pub fn gradient_check(f: &TinyFixture, seed: u64, h: f64, tol: f64) -> GradReport {
    let mut g = Gen::new(seed ^ 0x5eed);
    let up: Vec<f64> = (0..f.cfg.dim).map(|_| g.span(-1.0, 1.0)).collect();
    let base = SpatialSampler::new(f.cfg, f.params.clone()).unwrap();
    let (_, tape) = base.forward(&f.mask, &f.fmap, seed).unwrap();
    let pattern = tape.argmax_pattern();
    let grads = base.backward(&tape, &up).unwrap();
    let mut rep = GradReport {
        checked: 0,
        skipped_ties: 0,
        worst: 0.0,
        failures: Vec::new(),
    };
    let mut record = |name: String, analytic: f64, plus: (f64, Vec<usize>), minus: (f64, Vec<usize>)| {
        if plus.1 != pattern || minus.1 != pattern {
            rep.skipped_ties += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        rep.checked += 1;
        rep.worst = rep.worst.max(err);
        if err > tol {
            rep.failures
                .push(format!("{name}: analytic {analytic} numeric {numeric}"));
        }
    };

    let names = f.params.tensor_names();
    let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.to_vec()).collect();
    for (t, name) in names.iter().enumerate() {
        for e in 0..analytic[t].len() {
            let eval = |delta: f64| {
                let mut p = f.params.clone();
                p.tensors_mut()[t][e] += delta;
                let s = SpatialSampler::new(f.cfg, p).unwrap();
                objective(&s, f, &f.fmap, seed, &up)
            };
            record(format!("{name}[{e}]"), analytic[t][e], eval(h), eval(-h));
        }
    }
    for e in 0..f.fmap.data().len() {
        let eval = |delta: f64| {
            let mut d = f.fmap.data().to_vec();
            d[e] += delta;
            let m = FeatureMap::new(f.fmap.height(), f.fmap.width(), f.fmap.channels(), d).unwrap();
            objective(&base, f, &m, seed, &up)
        };
        record(format!("fmap[{e}]"), grads.featmap[e], eval(h), eval(-h));
    }
    rep
}

// ------------------------------------------------------- FPS oracle

/// Random point sets with n <= 64; library FPS must equal the greedy trace.
pub fn check_fps_oracle(cases: usize, seed: u64) -> Result<usize, String> {
    let mut g = Gen::new(seed);
    for case in 0..cases {
        let n = g.range(1, 64);
        let m = g.range(1, n);
        let extent = [g.range(1, 64) as f64, g.range(1, 64) as f64];
        // integer pixel centers, so duplicates and exact ties occur
        let pos: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                [
                    g.below(extent[0] as usize) as f64 + 0.5,
                    g.below(extent[1] as usize) as f64 + 0.5,
                ]
            })
            .collect();
        let pts = PointSet::new(pos.clone(), extent, 0, Vec::new()).unwrap();
        let fseed = g.below(1 << 30) as u64;
        let got = fps(&pts, m, fseed).unwrap();
        let start = SplitRng::new(fseed, STREAM_FPS).index(n);
        let want = ref_fps(&pos, extent, m, start);
        if got != want {
            return Err(format!("case {case} (n={n}, m={m}): {got:?} != {want:?}"));
        }
        let s2 = g.below(n);
        if fps_from(&pts, m, s2).unwrap() != ref_fps(&pos, extent, m, s2) {
            return Err(format!("case {case}: fps_from differs from start {s2}"));
        }
    }
    Ok(cases)
}

// --------------------------------------------------------- quantizer

pub fn check_quantizer(round_trips: usize, scaled: usize, seed: u64) -> Result<String, String> {
    let mut g = Gen::new(seed);
    let q = QuantizerConfig::default();
    let n = q.n_bins as f64;
    for i in 0..round_trips {
        let extent = g.span(1e-3, 1e4);
        let coord = if g.coin(0.01) { extent } else { g.span(0.0, extent) };
        let back = dequantize(quantize(coord, extent, q).unwrap(), extent, q).unwrap();
        if (back - coord).abs() > extent / n {
            return Err(format!("round trip {i}: {coord} of {extent} -> {back}"));
        }
    }
    for i in 0..scaled {
        let (w, h) = (g.range(1, 2000) as u32, g.range(1, 2000) as u32);
        let x0 = g.range(0, w as usize - 1) as f64;
        let x1 = g.range(x0 as usize + 1, w as usize) as f64;
        let y0 = g.range(0, h as usize - 1) as f64;
        let y1 = g.range(y0 as usize + 1, h as usize) as f64;
        let s = g.range(2, 16) as f64;
        let a = region_bins(&Region::bbox(x0, y0, x1, y1), ImageSize::new(w, h), q).unwrap();
        let b = region_bins(
            &Region::bbox(x0 * s, y0 * s, x1 * s, y1 * s),
            ImageSize::new(w * s as u32, h * s as u32),
            q,
        )
        .unwrap();
        if a != b {
            return Err(format!("scaled pair {i}: {a:?} != {b:?} at scale {s}"));
        }
    }
    let token = HybridRegionToken {
        region_name: "a cat".into(),
        coords: BinCoords::Box(BinBox([100, 50, 200, 300])),
    };
    let literal = token.to_string();
    let want = format!("a cat [100, 50, 200, 300] {SPE_TOKEN}");
    if literal != want {
        return Err(format!("literal {literal:?}"));
    }
    let encoded = encode_region_text(
        "a cat",
        &Region::bbox(100.0, 50.0, 200.0, 300.0),
        ImageSize::new(1000, 1000),
        q,
    )
    .unwrap();
    if encoded != want {
        return Err(format!("encoded {encoded:?}"));
    }
    Ok(literal)
}

// ------------------------------------------------------------ metrics

const NOUNS: &[&str] = &[
    "dog", "cat", "man", "woman", "table", "chair", "kite", "horse", "bus", "cup", "tree", "boat",
];
const ADJS: &[&str] = &["red", "small", "old", "wooden", "tall", "striped"];
const DETS: &[&str] = &["", "a ", "the ", "The ", "some "];

fn vary_case(g: &mut Gen, s: &str) -> String {
    match g.below(3) {
        0 => s.to_uppercase(),
        1 => {
            let mut c = s.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect())
                .unwrap_or_default()
        }
        _ => s.to_string(),
    }
}

fn random_box(g: &mut Gen, w: f64, h: f64) -> BBox {
    let (a, b) = (g.span(0.0, w), g.span(0.0, w));
    let (c, d) = (g.span(0.0, h), g.span(0.0, h));
    BBox::new(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap()
}

/// Bins of `b`, sometimes nudged by a few bins.
fn near_bins(g: &mut Gen, b: &BBox, w: f64, h: f64, n: u32) -> BinBox {
    let mut v = [
        (b.x_min / w * n as f64).floor() as i64,
        (b.y_min / h * n as f64).floor() as i64,
        (b.x_max / w * n as f64).floor() as i64,
        (b.y_max / h * n as f64).floor() as i64,
    ];
    for x in &mut v {
        *x = (*x + g.range(0, 40) as i64 - 20).clamp(0, n as i64 - 1);
    }
    let (x0, x1) = (v[0].min(v[2]), v[0].max(v[2]));
    let (y0, y1) = (v[1].min(v[3]), v[1].max(v[3]));
    BinBox([x0 as u32, y0 as u32, x1 as u32, y1 as u32])
}

fn random_bins(g: &mut Gen, n: u32) -> BinBox {
    let (a, b) = (g.below(n as usize) as u32, g.below(n as usize) as u32);
    let (c, d) = (g.below(n as usize) as u32, g.below(n as usize) as u32);
    BinBox([a.min(b), c.min(d), a.max(b), c.max(d)])
}

/// Bin centers, area and IoU written out longhand.
fn oracle_box(b: BinBox, w: f64, h: f64, n: u32) -> [f64; 4] {
    let c = |v: u32, e: f64| (v as f64 + 0.5) * e / n as f64;
    [c(b.0[0], w), c(b.0[1], h), c(b.0[2], w), c(b.0[3], h)]
}

fn oracle_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

fn oracle_hit(pred: BinBox, gt: &BBox, w: f64, h: f64, n: u32) -> bool {
    oracle_iou(oracle_box(pred, w, h, n), gt.to_array()) > 0.5
}

struct RecCase {
    sample: RecSample,
    pred: Option<BinBox>,
}

fn gen_rec(g: &mut Gen, q: QuantizerConfig) -> RecCase {
    let (w, h) = (g.range(20, 2000) as f64, g.range(20, 2000) as f64);
    let gt = random_box(g, w, h);
    let noun = *g.pick(NOUNS);
    let pred = match g.below(4) {
        0 => None,
        1 => Some(random_bins(g, q.n_bins)),
        _ => Some(near_bins(g, &gt, w, h, q.n_bins)),
    };
    let text = match pred {
        Some(b) => format!("The {noun} {b} is on the left."),
        None => format!("There is no {noun} I can find."),
    };
    let image = ImageSize::new(w as u32, h as u32);
    RecCase {
        sample: RecSample {
            prediction: parse_grounded_text(&text, q.n_bins),
            gt,
            image,
        },
        pred,
    }
}

struct Phrase {
    det: &'static str,
    adj: Option<&'static str>,
    noun: &'static str,
}

impl Phrase {
    fn random(g: &mut Gen) -> Self {
        let adj = if g.coin(0.5) { Some(*g.pick(ADJS)) } else { None };
        Phrase {
            det: g.pick(DETS),
            adj,
            noun: g.pick(NOUNS),
        }
    }

    fn render(&self, g: &mut Gen) -> String {
        let body = match self.adj {
            Some(a) => format!("{a} {}", self.noun),
            None => self.noun.to_string(),
        };
        format!("{}{}", self.det, vary_case(g, &body))
    }

    /// Same noun, and adjectives equal or one side has none.
    fn matches(&self, o: &Phrase) -> bool {
        self.noun == o.noun && (self.adj == o.adj || self.adj.is_none() || o.adj.is_none())
    }
}

struct GroundCase {
    sample: PhraseGroundingSample,
    gt: Vec<(Phrase, Vec<BBox>)>,
    pred: Vec<(Phrase, Vec<BinBox>)>,
}

fn gen_ground(g: &mut Gen, q: QuantizerConfig) -> GroundCase {
    let (w, h) = (g.range(20, 1500) as f64, g.range(20, 1500) as f64);
    let gt: Vec<(Phrase, Vec<BBox>)> = (0..g.range(1, 4))
        .map(|_| {
            (
                Phrase::random(g),
                (0..g.range(1, 2)).map(|_| random_box(g, w, h)).collect(),
            )
        })
        .collect();
    let mut pred = Vec::new();
    for _ in 0..g.range(0, 5) {
        let (phrase, boxes) = if g.coin(0.7) {
            let (p, bs) = &gt[g.below(gt.len())];
            let adj = if g.coin(0.7) { p.adj } else { Some(*g.pick(ADJS)) };
            let boxes: Vec<BinBox> = bs
                .iter()
                .map(|b| {
                    if g.coin(0.8) {
                        near_bins(g, b, w, h, q.n_bins)
                    } else {
                        random_bins(g, q.n_bins)
                    }
                })
                .collect();
            (
                Phrase {
                    det: g.pick(DETS),
                    adj,
                    noun: p.noun,
                },
                boxes,
            )
        } else {
            (
                Phrase::random(g),
                (0..g.range(1, 2)).map(|_| random_bins(g, q.n_bins)).collect(),
            )
        };
        pred.push((phrase, boxes));
    }
    let mut b = GroundedTextBuilder::new();
    b.text("Here ");
    for (i, (p, boxes)) in pred.iter().enumerate() {
        if i > 0 {
            b.text(" and ");
        }
        let coords: Vec<BinCoords> = boxes.iter().map(|&x| BinCoords::Box(x)).collect();
        let text = p.render(g);
        b.grounded(&text, &coords);
    }
    b.text(".");
    let gt_phrases = gt
        .iter()
        .map(|(p, bs)| GtPhrase {
            phrase: p.render(g),
            boxes: bs.clone(),
        })
        .collect();
    let sample = PhraseGroundingSample {
        prediction: b.build(),
        gt: gt_phrases,
        image: ImageSize::new(w as u32, h as u32),
    };
    GroundCase { sample, gt, pred }
}

fn oracle_ground(c: &GroundCase, n: u32) -> (u64, u64) {
    let (w, h) = (c.sample.image.width as f64, c.sample.image.height as f64);
    let mut correct = 0;
    for (gp, gboxes) in &c.gt {
        let mut ok = false;
        for (pp, pboxes) in &c.pred {
            if !pp.matches(gp) {
                continue;
            }
            for &pb in pboxes {
                for gb in gboxes {
                    ok |= oracle_hit(pb, gb, w, h, n);
                }
            }
        }
        correct += ok as u64;
    }
    (correct, c.gt.len() as u64)
}

struct CaptionCase {
    sample: GroundedCaptionSample,
    gt: Vec<(&'static str, Vec<BBox>)>,
    pred: Vec<(&'static str, Vec<BinBox>)>,
}

fn gen_caption(g: &mut Gen, q: QuantizerConfig) -> CaptionCase {
    let (w, h) = (g.range(20, 1500) as f64, g.range(20, 1500) as f64);
    let gt: Vec<(&'static str, Vec<BBox>)> = (0..g.range(0, 4))
        .map(|_| {
            (
                *g.pick(NOUNS),
                (0..g.range(1, 2)).map(|_| random_box(g, w, h)).collect(),
            )
        })
        .collect();
    let mut pred = Vec::new();
    for _ in 0..g.range(0, 5) {
        if !gt.is_empty() && g.coin(0.7) {
            let (noun, bs) = &gt[g.below(gt.len())];
            let b = &bs[g.below(bs.len())];
            let bins = if g.coin(0.8) {
                near_bins(g, b, w, h, q.n_bins)
            } else {
                random_bins(g, q.n_bins)
            };
            pred.push((*noun, vec![bins]));
        } else {
            pred.push((*g.pick(NOUNS), vec![random_bins(g, q.n_bins)]));
        }
    }
    let mut b = GroundedTextBuilder::new();
    b.text("In this picture ");
    for (i, (noun, boxes)) in pred.iter().enumerate() {
        if i > 0 {
            b.text(" near ");
        }
        let phrase = Phrase {
            det: g.pick(DETS),
            adj: if g.coin(0.5) { Some(*g.pick(ADJS)) } else { None },
            noun,
        };
        let text = phrase.render(g);
        b.grounded(&text, &boxes.iter().map(|&x| BinCoords::Box(x)).collect::<Vec<_>>());
    }
    b.text(".");
    let objects = gt
        .iter()
        .map(|(wd, bs)| GtObject {
            word: vary_case(g, wd),
            boxes: bs.clone(),
        })
        .collect();
    let sample = GroundedCaptionSample {
        prediction: b.build(),
        gt: objects,
        image: ImageSize::new(w as u32, h as u32),
    };
    CaptionCase { sample, gt, pred }
}

/// `(predicted, gt, matched, localized)` over unique words.
fn oracle_caption(c: &CaptionCase, n: u32) -> [u64; 4] {
    let (w, h) = (c.sample.image.width as f64, c.sample.image.height as f64);
    let pwords: BTreeSet<&str> = c.pred.iter().map(|p| p.0).collect();
    let gwords: BTreeSet<&str> = c.gt.iter().map(|p| p.0).collect();
    let mut matched = 0;
    let mut localized = 0;
    for word in &pwords {
        if !gwords.contains(word) {
            continue;
        }
        matched += 1;
        let mut ok = false;
        for (pw, pbs) in &c.pred {
            for (gw, gbs) in &c.gt {
                if pw == word && gw == word {
                    for &pb in pbs {
                        for gb in gbs {
                            ok |= oracle_hit(pb, gb, w, h, n);
                        }
                    }
                }
            }
        }
        localized += ok as u64;
    }
    [pwords.len() as u64, gwords.len() as u64, matched, localized]
}

/// Answer, gt label, and whether the answer reads as yes / is unparseable.
fn gen_pope(g: &mut Gen) -> (String, bool, bool, bool) {
    let noun = *g.pick(NOUNS);
    let gt = g.coin(0.5);
    let (text, yes, unparsed) = match g.below(9) {
        0 => (format!("Yes, there is a {noun} in the image."), true, false),
        1 => ("yes".to_string(), true, false),
        2 => (format!("I can see a {noun}, yes."), true, false),
        3 => (format!("No, there is no {noun} in the image."), false, false),
        4 => ("NO.".to_string(), false, false),
        5 => (format!("There is not a {noun} here."), false, false),
        6 => (format!("The {noun} is not present."), false, false),
        7 => ("I am unsure.".to_string(), false, true),
        _ => (format!("Maybe a {noun}."), false, true),
    };
    (text, gt, yes, unparsed)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn div(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn ratio_ok(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

/// Each of the four metrics against its longhand recount on `sets` random
/// record sets, plus permutation and concatenation invariance.
pub fn check_metrics_oracle(sets: usize, seed: u64) -> Result<[u64; 4], String> {
    let q = QuantizerConfig::default();
    let n = q.n_bins;
    let mut g = Gen::new(seed);
    let mut totals = [0u64; 4];
    for set in 0..sets {
        let size = g.range(1, 12);

        let rec: Vec<RecCase> = (0..size).map(|_| gen_rec(&mut g, q)).collect();
        let samples: Vec<RecSample> = rec.iter().map(|c| c.sample.clone()).collect();
        let got = eval_rec(&samples, q);
        let want = rec
            .iter()
            .filter(|c| {
                c.pred.is_some_and(|p| {
                    oracle_hit(
                        p,
                        &c.sample.gt,
                        c.sample.image.width as f64,
                        c.sample.image.height as f64,
                        n,
                    )
                })
            })
            .count() as u64;
        if got.correct != want || got.total != size as u64 || !ratio_ok(got.accuracy(), div(want, size as u64)) {
            return Err(format!("rec set {set}: {got:?} vs {want}/{size}"));
        }
        let mut shuffled = samples.clone();
        g.shuffle(&mut shuffled);
        if eval_rec(&shuffled, q) != got {
            return Err(format!("rec set {set}: permutation changed counts"));
        }
        let cut = g.below(size + 1);
        let (mut a, b) = (eval_rec(&samples[..cut], q), eval_rec(&samples[cut..], q));
        a.merge(&b);
        if a != got {
            return Err(format!("rec set {set}: split counts do not add up"));
        }
        totals[0] += got.total;

        let ground: Vec<GroundCase> = (0..size).map(|_| gen_ground(&mut g, q)).collect();
        let samples: Vec<PhraseGroundingSample> = ground.iter().map(|c| c.sample.clone()).collect();
        let got = eval_phrase_grounding(&samples, q);
        let (mut wc, mut wt) = (0, 0);
        for c in &ground {
            let (a, b) = oracle_ground(c, n);
            wc += a;
            wt += b;
        }
        if got.correct != wc || got.total != wt || !ratio_ok(got.accuracy(), div(wc, wt)) {
            return Err(format!("phrase grounding set {set}: {got:?} vs {wc}/{wt}"));
        }
        let mut shuffled = samples.clone();
        g.shuffle(&mut shuffled);
        if eval_phrase_grounding(&shuffled, q) != got {
            return Err(format!("phrase grounding set {set}: permutation changed counts"));
        }
        totals[1] += got.total;

        let caps: Vec<CaptionCase> = (0..size).map(|_| gen_caption(&mut g, q)).collect();
        let samples: Vec<GroundedCaptionSample> = caps.iter().map(|c| c.sample.clone()).collect();
        let got = eval_grounded_caption(&samples, q);
        let mut want = [0u64; 4];
        for c in &caps {
            for (w, v) in want.iter_mut().zip(oracle_caption(c, n)) {
                *w += v;
            }
        }
        if [got.predicted, got.gt, got.matched, got.localized] != want {
            return Err(format!("caption set {set}: {got:?} vs {want:?}"));
        }
        let (p, r) = (div(want[3], want[0]), div(want[3], want[1]));
        let loc = div(want[3], want[2]);
        if !ratio_ok(got.f1_all(), f1(p, r)) || !ratio_ok(got.f1_loc(), f1(loc, loc)) {
            return Err(format!("caption set {set}: f1 {} {}", got.f1_all(), got.f1_loc()));
        }
        let mut shuffled = samples.clone();
        g.shuffle(&mut shuffled);
        if eval_grounded_caption(&shuffled, q) != got {
            return Err(format!("caption set {set}: permutation changed counts"));
        }
        totals[2] += want[1];

        let pope: Vec<(String, bool, bool, bool)> = (0..size * 4).map(|_| gen_pope(&mut g)).collect();
        let got = eval_pope(pope.iter().map(|(t, gt, _, _)| (t.as_str(), *gt)));
        let mut c = [0u64; 5];
        for (_, gt, yes, unparsed) in &pope {
            match (yes, gt) {
                (true, true) => c[0] += 1,
                (true, false) => c[1] += 1,
                (false, false) => c[2] += 1,
                (false, true) => c[3] += 1,
            }
            c[4] += *unparsed as u64;
        }
        if [got.tp, got.fp, got.tn, got.fn_, got.unparsed] != c {
            return Err(format!("pope set {set}: {got:?} vs {c:?}"));
        }
        let total = c[0] + c[1] + c[2] + c[3];
        let (p, r) = (div(c[0], c[0] + c[1]), div(c[0], c[0] + c[3]));
        if !ratio_ok(got.accuracy(), div(c[0] + c[2], total))
            || !ratio_ok(got.precision(), p)
            || !ratio_ok(got.recall(), r)
            || !ratio_ok(got.f1(), f1(p, r))
            || !ratio_ok(got.yes_ratio(), div(c[0] + c[1], total))
        {
            return Err(format!("pope set {set}: ratios"));
        }
        let mut rev = pope.clone();
        rev.reverse();
        if eval_pope(rev.iter().map(|(t, gt, _, _)| (t.as_str(), *gt))) != got {
            return Err(format!("pope set {set}: permutation changed counts"));
        }
        totals[3] += total;
    }
    Ok(totals)
}

/// A prediction at IoU exactly 0.5 is a miss.
pub fn check_iou_strictness() -> Result<(), String> {
    let a = BBox::new(0.0, 0.0, 2.0, 1.0).unwrap();
    let b = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    if iou(&a, &b) != 0.5 {
        return Err(format!("iou {}", iou(&a, &b)));
    }
    let q = QuantizerConfig::default();
    // bins [0,0,99,99] on 1000x1000 decode to [0.5, 0.5, 99.5, 99.5]
    let gt = BBox::new(0.5, 0.5, 99.5, 198.5).unwrap();
    let s = RecSample {
        prediction: parse_grounded_text("the dog [0, 0, 99, 99]", 1000),
        gt,
        image: ImageSize::new(1000, 1000),
    };
    let decoded = s.prediction.first_box().unwrap().to_pixels(s.image, q).unwrap();
    if iou(&decoded, &gt) != 0.5 {
        return Err(format!("decoded iou {}", iou(&decoded, &gt)));
    }
    if rec_correct(&s, q) {
        return Err("IoU of exactly 0.5 scored as correct".into());
    }
    let inside = RecSample {
        gt: BBox::new(0.5, 0.5, 99.5, 198.0).unwrap(),
        ..s
    };
    if !rec_correct(&inside, q) {
        return Err("IoU just above 0.5 scored as incorrect".into());
    }
    Ok(())
}

/// GT boxes with IoU {0.9, 0.51, 0.5, 0.1} against their predictions: two hits.
pub fn phrase_grounding_example() -> Result<f64, String> {
    let q = QuantizerConfig::default();
    let image = ImageSize::new(1000, 1000);
    // prediction decodes to [0.5, 0.5, 100.5, 100.5], area 10000
    let pred = BinBox([0, 0, 100, 100]);
    let gt_for = |iou_target: f64| {
        // same x-range, taller box: area 10000 / iou
        let h = 100.0 / iou_target;
        BBox::new(0.5, 0.5, 100.5, 0.5 + h).unwrap()
    };
    let mut b = GroundedTextBuilder::new();
    let names = ["dog", "cat", "man", "kite"];
    let mut gt = Vec::new();
    for (i, (name, t)) in names.iter().zip([0.9, 0.51, 0.5, 0.1]).enumerate() {
        if i > 0 {
            b.text(" and ");
        }
        b.grounded(&format!("the {name}"), &[BinCoords::Box(pred)]);
        gt.push(GtPhrase {
            phrase: name.to_string(),
            boxes: vec![gt_for(t)],
        });
    }
    let s = PhraseGroundingSample {
        prediction: b.build(),
        gt,
        image,
    };
    let r = eval_phrase_grounding(&[s], q);
    if r.correct != 2 || r.total != 4 || r.accuracy() != 0.5 {
        return Err(format!("{r:?}"));
    }
    Ok(r.accuracy())
}

// ------------------------------------------------------------ "not"

const CLASS_PAIRS: &[(&str, &str)] = &[
    ("cat", "dog"),
    ("notebook", "knot"),
    ("person", "bicycle"),
    ("traffic light", "stop sign"),
    ("cup", "bowl"),
    ("Giraffe", "zebra"),
    ("hot dog", "pizza"),
    ("cell phone", "remote"),
    ("teddy bear", "kite"),
    ("oven", "toaster"),
];

const NOT_TEMPLATES: &[&str] = &[
    "The object is {gt}, not {neg}.",
    "It is not {neg}, it is {gt}.",
    "Not a {neg}. This is a {gt}.",
    "This is not a {neg} and certainly not {neg} again, it is a {gt}, not a {neg}.",
    "The region shows a {GT}, definitely NOT a {neg}",
];

/// `(response, gt, neg)` for the adversarial fixture.
pub fn not_rule_fixture() -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    for (gt, neg) in CLASS_PAIRS {
        for t in NOT_TEMPLATES {
            let r = t
                .replace("{gt}", gt)
                .replace("{GT}", &gt.to_uppercase())
                .replace("{neg}", neg);
            out.push((r, gt.to_string(), neg.to_string()));
        }
    }
    out
}

pub fn check_not_rule() -> Result<usize, String> {
    let cases = not_rule_fixture();
    for (r, gt, neg) in &cases {
        if !match_refer_answer(r, gt) {
            return Err(format!("{r:?} not credited to {gt}"));
        }
        if match_refer_answer(r, neg) {
            return Err(format!("{r:?} credited to {neg}"));
        }
    }
    Ok(cases.len())
}

// ------------------------------------------------------------- parser

const FILLERS: &[&str] = &[
    "There is",
    "I see",
    "next to",
    "and",
    "while",
    "which is near",
    "located at",
    "with",
];
const PHRASE_WORDS: &[&str] = &[
    "dog", "big", "brown", "man's", "t-shirt", "x2", "zebra", "old", "blue", "frame", "café",
];
const OPENERS: &[&str] = &["a", "the", "this", "some", "their"];

fn random_coords(g: &mut Gen, n: u32) -> BinCoords {
    if g.coin(0.8) {
        BinCoords::Box(random_bins(g, n))
    } else {
        BinCoords::Point([g.below(n as usize) as u32, g.below(n as usize) as u32])
    }
}

/// Builds random grounded text whose phrases the parser must recover.
pub fn random_grounded_text(g: &mut Gen, n: u32) -> GroundedText {
    let mut b = GroundedTextBuilder::new();
    let spans = g.range(0, 5);
    if g.coin(0.5) {
        b.text(g.pick(FILLERS)).text(" ");
    }
    for i in 0..spans {
        if i > 0 {
            b.text(g.pick(&[", ", " ", ". "])).text(g.pick(FILLERS)).text(" ");
        }
        let mut words: Vec<String> = Vec::new();
        if g.coin(0.6) {
            words.push(g.pick(OPENERS).to_string());
        }
        for _ in 0..g.range(1, 3) {
            words.push(g.pick(PHRASE_WORDS).to_string());
        }
        let phrase = vary_case(g, &words.join(" "));
        let coords: Vec<BinCoords> = (0..g.range(1, 3)).map(|_| random_coords(g, n)).collect();
        b.grounded(&phrase, &coords);
    }
    b.text(g.pick(&["", ".", " in the image.", "!"]));
    b.build()
}

pub fn check_parser_round_trip(cases: usize, seed: u64) -> Result<usize, String> {
    let mut g = Gen::new(seed);
    for i in 0..cases {
        let n = *g.pick(&[1000u32, 1000, 100, 32]);
        let want = random_grounded_text(&mut g, n);
        let got = parse_grounded_text(&want.raw, n);
        if got != want {
            return Err(format!(
                "case {i}: {:?}\n got {:?}\nwant {:?}",
                want.raw, got.spans, want.spans
            ));
        }
    }
    Ok(cases)
}

const FUZZ_PIECES: &[&str] = &[
    "[",
    "]",
    ",",
    " ",
    "1",
    "0",
    "999",
    "1000",
    "4294967296",
    "99999999999999999999",
    "-3",
    "a",
    "dog",
    "[1, 2",
    "3, 4]",
    "[]",
    "[[",
    "]]",
    "[5,6,7,8]",
    "[ 1 , 2 ]",
    "é",
    "\n",
    "[9, 9, 1, 1]",
    "[0, 0, 0, 0]",
    "2.5",
];

pub fn check_parser_fuzz(cases: usize, seed: u64) -> Result<usize, String> {
    let mut g = Gen::new(seed);
    for i in 0..cases {
        let n = g.range(2, 2000) as u32;
        let text: String = (0..g.range(0, 40)).map(|_| *g.pick(FUZZ_PIECES)).collect();
        let parsed = std::panic::catch_unwind(|| parse_grounded_text(&text, n))
            .map_err(|_| format!("case {i}: parser panicked on {text:?}"))?;
        for s in &parsed.spans {
            if s.coords.is_empty() || s.coords.iter().any(|c| !c.is_valid(n)) {
                return Err(format!("case {i}: bad coords {:?} for n={n} in {text:?}", s.coords));
            }
            if text.get(s.range.clone()).is_none() || text.get(s.coords_range.clone()).is_none() {
                return Err(format!("case {i}: span outside text"));
            }
        }
    }
    Ok(cases)
}

// --------------------------------------------------------------- grit

/// Every response parses, every bin is in range, and all region-out tasks
/// carry coordinates.
pub fn check_grit_corpus(samples: &[InstructionSample], q: QuantizerConfig) -> Result<(), String> {
    let group = regex::Regex::new(r"\[[^\]]*\]").unwrap();
    for s in samples {
        for text in [&s.prompt, &s.response] {
            for m in group.find_iter(text) {
                let g = parse_grounded_text(m.as_str(), q.n_bins);
                let relative = m.as_str().contains('.');
                if !relative && g.spans.len() != 1 {
                    return Err(format!("{}: unparseable group {}", s.task, m.as_str()));
                }
            }
        }
        let parsed = parse_grounded_text(&s.response, q.n_bins);
        if s.task.is_region_out() && parsed.spans.is_empty() {
            return Err(format!("{}: response without coordinates: {:?}", s.task, s.response));
        }
        if parsed.coords().any(|c| !c.is_valid(q.n_bins)) {
            return Err(format!("{}: bins out of range", s.task));
        }
    }
    Ok(())
}

/// Tasks the example scene supports: all of them.
pub fn compile_example(seed: u64) -> Vec<InstructionSample> {
    convert_all(&grit::example_scene(), &Task::ALL, &ConvertOptions::default(), seed).unwrap()
}

pub fn per_task(samples: &[InstructionSample]) -> BTreeMap<Task, usize> {
    let mut m = BTreeMap::new();
    for s in samples {
        *m.entry(s.task).or_insert(0) += 1;
    }
    m
}

pub fn skewed_corpus(pos: usize, neg: usize) -> Vec<InstructionSample> {
    let mk = |i: usize, polarity| InstructionSample {
        prompt: format!("Is there a thing {i}?"),
        response: "answer".into(),
        task: Task::Hallucination,
        polarity,
        image_id: format!("img-{i}"),
        mining: Some(MiningType::ImageConditioned),
    };
    (0..pos)
        .map(|i| mk(i, Polarity::Positive))
        .chain((0..neg).map(|i| mk(pos + i, Polarity::Negative)))
        .collect()
}

pub fn check_grit(seed: u64) -> Result<String, String> {
    let q = QuantizerConfig::default();
    let samples = compile_example(seed);
    let counts = per_task(&samples);
    for t in Task::ALL {
        if counts.get(&t).copied().unwrap_or(0) == 0 {
            return Err(format!("no sample for {t}"));
        }
    }
    check_grit_corpus(&samples, q)?;
    let balanced = balance(skewed_corpus(100, 40), seed);
    let pos = balanced.iter().filter(|s| s.polarity == Polarity::Positive).count();
    let neg = balanced.len() - pos;
    if pos != neg || neg != 40 {
        return Err(format!("balance gave {pos}/{neg}"));
    }
    Ok(format!(
        "{} samples over {} tasks, balance 100/40 -> {pos}/{neg}",
        samples.len(),
        counts.len()
    ))
}

// ---------------------------------------------------------------- cli

pub fn ferret() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_ferret"))
}

pub fn run_ok(args: &[&str]) -> String {
    let out = ferret().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "ferret {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// rasterize -> gen-fixtures -> sample -> eval in `dir`; returns every
/// artifact's bytes by name.
pub fn pipeline(dir: &std::path::Path, seed: u64) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let s = seed.to_string();
    std::fs::write(
        p("region.json"),
        r#"{"type":"polygon","vertices":[[4,3],[40,6],[36,30],[8,28]]}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut arts = BTreeMap::new();
    let step = |arts: &mut BTreeMap<String, Vec<u8>>, name: &str, args: Vec<String>| -> Result<(), String> {
        let out = ferret().args(&args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{name}: {}", String::from_utf8_lossy(&out.stderr)));
        }
        arts.insert(format!("{name}.stdout"), out.stdout);
        Ok(())
    };
    step(
        &mut arts,
        "rasterize",
        [
            "rasterize",
            "--region",
            &p("region.json"),
            "--width",
            "48",
            "--height",
            "36",
            "--name",
            "a kite",
            "--out",
            &p("mask.json"),
            "--seed",
            &s,
        ]
        .map(String::from)
        .to_vec(),
    )?;
    step(
        &mut arts,
        "fixtures",
        [
            "gen-fixtures",
            "--out-dir",
            &p(""),
            "--tiny",
            "--fmap",
            "random",
            "--fmap-channels",
            "3",
            "--seed",
            &s,
        ]
        .map(String::from)
        .to_vec(),
    )?;
    step(
        &mut arts,
        "sample",
        [
            "sample",
            "--mask",
            &p("mask.json"),
            "--fmap",
            &p("pattern.fmap"),
            "--params",
            &p("tiny.sparams"),
            "--seed",
            &s,
            "--manifest",
        ]
        .map(String::from)
        .to_vec(),
    )?;
    // a prediction file built from the rasterized region's bins
    let raster: serde_json::Value = serde_json::from_slice(&arts["rasterize.stdout"]).map_err(|e| e.to_string())?;
    let bins: Vec<u64> = serde_json::from_value(raster["bins"].clone()).map_err(|e| e.to_string())?;
    let rec = format!(
        "{{\"id\":\"r1\",\"task\":\"rec\",\"text\":\"a kite [{}, {}, {}, {}].\",\"gt\":{{\"box\":[4,3,40,30],\"width\":48,\"height\":36}}}}\n",
        bins[0], bins[1], bins[2], bins[3]
    );
    std::fs::write(p("pred.jsonl"), rec).map_err(|e| e.to_string())?;
    step(
        &mut arts,
        "eval",
        ["eval-rec", "--pred", &p("pred.jsonl"), "--seed", &s]
            .map(String::from)
            .to_vec(),
    )?;
    for f in [
        "mask.json",
        "pattern.fmap",
        "tiny.fmap",
        "tiny.sparams",
        "tiny_mask.json",
        "tiny_expected.json",
        "pred.jsonl",
    ] {
        arts.insert(f.to_string(), std::fs::read(p(f)).map_err(|e| e.to_string())?);
    }
    // reports name their input paths; make them relative to the run dir
    let root = dir.to_str().unwrap().to_string();
    for (name, bytes) in arts.iter_mut() {
        if name.ends_with(".stdout") {
            *bytes = String::from_utf8_lossy(bytes).replace(&root, "<dir>").into_bytes();
        }
    }
    Ok(arts)
}
