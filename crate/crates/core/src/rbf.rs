//! Gaussian radial-basis-function networks.
//!
//! Hidden unit `n` responds with `exp(-(|x - c_n| / delta_n)^2)`; the output
//! is a linear "full connect" layer `y = W h(x)`. Centers and radii are fixed
//! once placed; only `W` is ever trained, offline by ridge least squares and
//! online by the estimator/controller update laws.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const FORMAT_TAG: &str = "RBFNET";
const FORMAT_VERSION: u32 = 1;
const KMEANS_MAX_ITERS: usize = 100;
const RADIUS_NEIGHBOURS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RbfLayer {
    /// One center per row.
    centers: DMatrix<f64>,
    radii: DVector<f64>,
}

impl RbfLayer {
    pub fn new(centers: DMatrix<f64>, radii: DVector<f64>) -> Result<Self> {
        if centers.nrows() == 0 {
            return Err(Error::param("rbf.n_hidden", "need at least one hidden unit"));
        }
        if radii.len() != centers.nrows() {
            return Err(Error::Dimension {
                context: "rbf radii",
                expected: centers.nrows(),
                got: radii.len(),
            });
        }
        if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::param("rbf.radii", "every radius must be finite and > 0"));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("rbf.centers", "centers must be finite"));
        }
        Ok(Self { centers, radii })
    }

    pub fn n_hidden(&self) -> usize {
        self.centers.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn radii(&self) -> &DVector<f64> {
        &self.radii
    }

    /// Same centers with every radius multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::param("rbf.width_scale", "must be finite and > 0"));
        }
        Self::new(self.centers, self.radii * factor)
    }

    /// Hidden-layer response `h_n = exp(-(|x - c_n| / delta_n)^2)`.
    pub fn activations(&self, x: &[f64]) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        DVector::from_fn(self.n_hidden(), |n, _| {
            let dist2: f64 = self.centers.row(n).iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum();
            (-dist2 / (self.radii[n] * self.radii[n])).exp()
        })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "rbf input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork {
    layer: RbfLayer,
    /// `d_out x n_hidden`; column `n` is the output weight vector of unit `n`.
    weights: DMatrix<f64>,
}

impl RbfNetwork {
    pub fn new(layer: RbfLayer, weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() != layer.n_hidden() {
            return Err(Error::Dimension {
                context: "rbf weight columns",
                expected: layer.n_hidden(),
                got: weights.ncols(),
            });
        }
        if weights.nrows() == 0 {
            return Err(Error::param("rbf.d_out", "output dimension must be >= 1"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("rbf.weights", "weights must be finite"));
        }
        Ok(Self { layer, weights })
    }

    pub fn zeros(layer: RbfLayer, d_out: usize) -> Self {
        let n_h = layer.n_hidden();
        Self {
            layer,
            weights: DMatrix::zeros(d_out, n_h),
        }
    }

    pub fn layer(&self) -> &RbfLayer {
        &self.layer
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.layer.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn activations(&self, x: &[f64]) -> DVector<f64> {
        self.layer.activations(x)
    }

    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.layer.check_input(x)?;
        Ok(self.forward_from(&self.layer.activations(x)))
    }

    /// Output for precomputed activations.
    pub fn forward_from(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.weights * h
    }

    /// `d forward / d x`, shape `d_out x d_in`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.layer.check_input(x)?;
        let h = self.layer.activations(x);
        let mut grad_h = DMatrix::zeros(self.layer.n_hidden(), self.input_dim());
        for n in 0..self.layer.n_hidden() {
            let scale = -2.0 * h[n] / (self.layer.radii[n] * self.layer.radii[n]);
            for (i, xi) in x.iter().enumerate() {
                grad_h[(n, i)] = scale * (xi - self.layer.centers[(n, i)]);
            }
        }
        Ok(&self.weights * grad_h)
    }

    /// Lipschitz constant of `forward` w.r.t. the Euclidean norm.
    ///
    /// `|grad h_n|` peaks at `sqrt(2) e^{-1/2} / delta_n`.
    pub fn lipschitz_bound(&self) -> f64 {
        let peak = std::f64::consts::SQRT_2 * (-0.5f64).exp();
        (0..self.layer.n_hidden())
            .map(|n| self.weights.column(n).norm() * peak / self.layer.radii[n])
            .sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (d_in, d_out, n_h) = (self.input_dim(), self.output_dim(), self.layer.n_hidden());
        writeln!(s, "{FORMAT_TAG} {FORMAT_VERSION}").unwrap();
        writeln!(s, "dims {d_in} {d_out} {n_h}").unwrap();
        writeln!(s, "centers").unwrap();
        for row in self.layer.centers.row_iter() {
            write_row(&mut s, row.iter());
        }
        writeln!(s, "radii").unwrap();
        write_row(&mut s, self.layer.radii.iter());
        writeln!(s, "weights").unwrap();
        for row in self.weights.row_iter() {
            write_row(&mut s, row.iter());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("rbf model truncated before {what}")))
        };

        let header = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(FORMAT_TAG) {
            return Err(Error::Parse(format!("not an rbf model (header `{header}`)")));
        }
        let version: u32 = parse_tok(parts.next(), "version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported rbf model version {version}")));
        }

        let dims = next("dims")?;
        let mut parts = dims.split_whitespace();
        if parts.next() != Some("dims") {
            return Err(Error::Parse("expected `dims` line".into()));
        }
        let d_in: usize = parse_tok(parts.next(), "d_in")?;
        let d_out: usize = parse_tok(parts.next(), "d_out")?;
        let n_h: usize = parse_tok(parts.next(), "n_h")?;

        expect_section(next("centers")?, "centers")?;
        let mut centers = DMatrix::zeros(n_h, d_in);
        for n in 0..n_h {
            let row = parse_row(next("center row")?, d_in)?;
            centers.row_mut(n).copy_from_slice(&row);
        }
        expect_section(next("radii")?, "radii")?;
        let radii = DVector::from_vec(parse_row(next("radii values")?, n_h)?);
        expect_section(next("weights")?, "weights")?;
        let mut weights = DMatrix::zeros(d_out, n_h);
        for m in 0..d_out {
            let row = parse_row(next("weight row")?, n_h)?;
            weights.row_mut(m).copy_from_slice(&row);
        }
        RbfNetwork::new(RbfLayer::new(centers, radii)?, weights)
    }

    /// Writes the model, preceded by optional `# ...` header comment lines.
    pub fn save(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut body = String::new();
        for c in comments {
            writeln!(body, "# {c}").unwrap();
        }
        body.push_str(&self.to_text());
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn write_row<'a>(s: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            s.push(' ');
        }
        first = false;
        write!(s, "{v:e}").unwrap();
    }
    s.push('\n');
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad or missing {what}")))
}

fn parse_row(line: &str, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("`{t}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Dimension {
            context: "rbf model row",
            expected,
            got: values.len(),
        });
    }
    Ok(values)
}

fn expect_section(line: &str, name: &str) -> Result<()> {
    if line == name {
        Ok(())
    } else {
        Err(Error::Parse(format!("expected section `{name}`, found `{line}`")))
    }
}

/// Paired input/target samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Vec<DVector<f64>>,
    targets: Vec<DVector<f64>>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<DVector<f64>>, targets: Vec<DVector<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::param("training_set", "must hold at least one sample"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Dimension {
                context: "training set targets",
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let (d_in, d_out) = (inputs[0].len(), targets[0].len());
        if let Some(bad) = inputs.iter().find(|x| x.len() != d_in) {
            return Err(Error::Dimension {
                context: "training input",
                expected: d_in,
                got: bad.len(),
            });
        }
        if let Some(bad) = targets.iter().find(|y| y.len() != d_out) {
            return Err(Error::Dimension {
                context: "training target",
                expected: d_out,
                got: bad.len(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[DVector<f64>] {
        &self.targets
    }

    /// Keeps the inputs and maps each target through `f`.
    pub fn map_targets(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), self.targets.iter().map(f).collect())
    }

    /// CSV with header `x0..x{d_in-1},y0..y{d_out-1}`, one sample per row.
    pub fn write_csv<W: Write>(&self, out: W, comments: &[String]) -> std::result::Result<(), csv::Error> {
        let mut out = out;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..self.input_dim())
            .map(|i| format!("x{i}"))
            .chain((0..self.target_dim()).map(|i| format!("y{i}")))
            .collect();
        w.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            w.write_record(x.iter().chain(y.iter()).map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let d_in = header.iter().filter(|h| h.starts_with('x')).count();
        let d_out = header.iter().filter(|h| h.starts_with('y')).count();
        if d_in + d_out != header.len() || d_in == 0 || d_out == 0 {
            return Err(Error::Parse("training CSV header must be x0..,y0..".into()));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{t}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            inputs.push(DVector::from_column_slice(&vals[..d_in]));
            targets.push(DVector::from_column_slice(&vals[d_in..]));
        }
        Self::new(inputs, targets)
    }

    pub fn save_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f), comments).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Hidden-layer design matrix, one sample per row.
pub fn design_matrix(layer: &RbfLayer, inputs: &[DVector<f64>]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(inputs.len(), layer.n_hidden());
    for (i, x) in inputs.iter().enumerate() {
        h.row_mut(i).copy_from(&layer.activations(x.as_slice()).transpose());
    }
    h
}

/// Ridge least squares on the output layer:
/// minimizes `sum |y - W h(x)|^2 + ridge |W|_F^2` via the normal equations.
pub fn fit_offline(layer: &RbfLayer, data: &TrainingSet, ridge: f64) -> Result<RbfNetwork> {
    if !(ridge >= 0.0) {
        return Err(Error::param("ridge", "must be >= 0"));
    }
    if data.input_dim() != layer.input_dim() {
        return Err(Error::Dimension {
            context: "training inputs vs layer",
            expected: layer.input_dim(),
            got: data.input_dim(),
        });
    }
    let h = design_matrix(layer, data.inputs());
    let mut y = DMatrix::zeros(data.len(), data.target_dim());
    for (i, t) in data.targets().iter().enumerate() {
        y.row_mut(i).copy_from(&t.transpose());
    }
    let mut normal = h.transpose() * &h;
    let scale = normal.diagonal().max();
    for n in 0..normal.nrows() {
        normal[(n, n)] += ridge;
    }
    let chol = normal.clone().cholesky().ok_or(Error::SingularNormalMatrix)?;
    if ridge == 0.0 {
        let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min_pivot * min_pivot <= 1e-13 * scale {
            return Err(Error::SingularNormalMatrix);
        }
    }
    let rhs = h.transpose() * y;
    let w_t = chol.solve(&rhs);
    RbfNetwork::new(layer.clone(), w_t.transpose())
}

/// Sum of squared residuals of `net` on `data`.
pub fn training_residual(net: &RbfNetwork, data: &TrainingSet) -> f64 {
    data.inputs()
        .iter()
        .zip(data.targets())
        .map(|(x, y)| (net.forward_from(&net.activations(x.as_slice())) - y).norm_squared())
        .sum()
}

/// k-means++ seeding followed by Lloyd iterations; each radius is the mean
/// distance to the nearest two other centers.
pub fn place_centers(samples: &[DVector<f64>], n_hidden: usize, seed: u64) -> Result<RbfLayer> {
    if n_hidden == 0 {
        return Err(Error::param("rbf.n_hidden", "need at least one hidden unit"));
    }
    if n_hidden > samples.len() {
        return Err(Error::TooFewSamples {
            requested: n_hidden,
            available: samples.len(),
        });
    }
    let dim = samples[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(n_hidden);
    centers.push(samples[rng.random_range(0..samples.len())].clone());
    let mut d2: Vec<f64> = samples.iter().map(|s| (s - &centers[0]).norm_squared()).collect();
    while centers.len() < n_hidden {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // guard against the float tail landing on an already-chosen point
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|w| *w > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..samples.len())
        };
        let c = samples[pick].clone();
        for (w, s) in d2.iter_mut().zip(samples) {
            *w = w.min((s - &c).norm_squared());
        }
        centers.push(c);
    }

    let mut assignment = vec![usize::MAX; samples.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, s) in samples.iter().enumerate() {
            let best = nearest(&centers, s);
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![DVector::zeros(dim); n_hidden];
        let mut counts = vec![0usize; n_hidden];
        for (s, &a) in samples.iter().zip(&assignment) {
            sums[a] += s;
            counts[a] += 1;
        }
        for k in 0..n_hidden {
            if counts[k] > 0 {
                centers[k] = &sums[k] / counts[k] as f64;
            }
        }
    }

    let radii = neighbour_radii(&centers, samples);
    let mut c = DMatrix::zeros(n_hidden, dim);
    for (k, ck) in centers.iter().enumerate() {
        c.row_mut(k).copy_from(&ck.transpose());
    }
    RbfLayer::new(c, DVector::from_vec(radii))
}

fn nearest(centers: &[DVector<f64>], x: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = (x - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn neighbour_radii(centers: &[DVector<f64>], samples: &[DVector<f64>]) -> Vec<f64> {
    let n = centers.len();
    let mut radii: Vec<f64> = if n == 1 {
        let rms = (samples.iter().map(|s| (s - &centers[0]).norm_squared()).sum::<f64>() / samples.len() as f64).sqrt();
        vec![rms]
    } else {
        let p = RADIUS_NEIGHBOURS.min(n - 1);
        (0..n)
            .map(|k| {
                let mut d: Vec<f64> = (0..n).filter(|&j| j != k).map(|j| (&centers[k] - &centers[j]).norm()).collect();
                d.sort_by(f64::total_cmp);
                d[..p].iter().sum::<f64>() / p as f64
            })
            .collect()
    };
    // coincident centers get the mean of the healthy radii
    let positive: Vec<f64> = radii.iter().copied().filter(|r| *r > 0.0).collect();
    let fallback = if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    };
    for r in &mut radii {
        if !(*r > 0.0) {
            *r = fallback;
        }
    }
    radii
}
