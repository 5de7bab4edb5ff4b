//! Random recurrent reservoir: construction, leaky-tanh state update, warm-up and
//! the empirical synchronization time used to size the warm-up.

use nalgebra::{DMatrix, DVector, Schur, QR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Reservoir hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirParams<T> {
    pub n_nodes: usize,
    pub avg_degree: T,
    pub spectral_radius: T,
    pub leak: T,
    pub bias: T,
    pub input_scale: T,
    pub n_warmup: usize,
}

impl<T: Real> Default for ReservoirParams<T> {
    fn default() -> Self {
        ReservoirParams {
            n_nodes: 50,
            avg_degree: T::lit(10.0),
            spectral_radius: T::lit(0.9),
            leak: T::one(),
            bias: T::lit(0.5),
            input_scale: T::one(),
            n_warmup: 1000,
        }
    }
}

impl<T: Real> ReservoirParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_nodes == 0 {
            return bad("reservoir needs at least one node");
        }
        if !(self.avg_degree > T::zero()) || self.avg_degree > T::from_usize_lossy(self.n_nodes) {
            return bad("average degree must lie in (0, N]");
        }
        if !(self.spectral_radius >= T::zero()) {
            return bad("spectral radius must be nonnegative");
        }
        if !(self.leak > T::zero() && self.leak <= T::one()) {
            return bad("leak rate must lie in (0, 1]");
        }
        if !(self.input_scale > T::zero()) {
            return bad("input scale must be positive");
        }
        if !self.bias.is_finite() {
            return bad("bias must be finite");
        }
        Ok(())
    }
}

/// Compressed sparse row square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from `(row, col, value)` entries sorted by row.
    pub fn from_sorted_entries(n: usize, entries: &[(usize, usize, T)]) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        for i in 0..self.n {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

/// Recurrent weight matrix, sparse when the link density is below 1/4.
#[derive(Clone, Debug, PartialEq)]
pub enum RecurrentWeights<T: Real> {
    Dense(DMatrix<T>),
    Sparse(CsrMatrix<T>),
}

impl<T: Real> RecurrentWeights<T> {
    pub const SPARSE_DENSITY: f64 = 0.25;

    pub fn n(&self) -> usize {
        match self {
            RecurrentWeights::Dense(m) => m.nrows(),
            RecurrentWeights::Sparse(m) => m.n,
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            RecurrentWeights::Dense(m) => m.iter().filter(|x| **x != T::zero()).count(),
            RecurrentWeights::Sparse(m) => m.nnz(),
        }
    }

    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        match self {
            RecurrentWeights::Dense(m) => {
                let n = m.nrows();
                out.fill(T::zero());
                // column-major: accumulate column j scaled by x[j]
                for (j, col) in m.as_slice().chunks_exact(n).enumerate() {
                    let xj = x[j];
                    if xj != T::zero() {
                        for (o, a) in out.iter_mut().zip(col) {
                            *o += *a * xj;
                        }
                    }
                }
            }
            RecurrentWeights::Sparse(m) => m.mul_vec_into(x, out),
        }
    }

    pub fn scale(&mut self, factor: T) {
        match self {
            RecurrentWeights::Dense(m) => *m *= factor,
            RecurrentWeights::Sparse(m) => m.values.iter_mut().for_each(|v| *v *= factor),
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        match self {
            RecurrentWeights::Dense(m) => m.clone(),
            RecurrentWeights::Sparse(m) => m.to_dense(),
        }
    }

    fn from_entries(n: usize, entries: &[(usize, usize, T)], sparse: bool) -> Self {
        if sparse {
            RecurrentWeights::Sparse(CsrMatrix::from_sorted_entries(n, entries))
        } else {
            let mut m = DMatrix::zeros(n, n);
            for &(i, j, v) in entries {
                m[(i, j)] = v;
            }
            RecurrentWeights::Dense(m)
        }
    }
}

fn max_modulus<T: Real>(m: DMatrix<T>) -> T {
    Schur::new(m)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.hypot(z.im))
        .fold(T::zero(), |a, b| a.max(b))
}

/// Largest eigenvalue modulus of `w`.
///
/// Small matrices go straight to a dense Schur decomposition. Larger ones use
/// subspace iteration on `w` itself: a block of 24 vectors is pushed through
/// `w`, re-orthonormalized every few products, and the Ritz values of the
/// projected block give the estimate. Working on the signed matrix keeps
/// complex dominant pairs, which a single-vector power iteration cannot resolve.
pub fn spectral_radius<T: Real>(w: &RecurrentWeights<T>) -> T {
    const BLOCK: usize = 24;
    const INNER: usize = 5;
    const MAX_ROUNDS: usize = 400;

    let n = w.n();
    if n == 0 {
        return T::zero();
    }
    if n <= BLOCK {
        return max_modulus(w.to_dense());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_5ec7);
    let start = DMatrix::from_fn(n, BLOCK, |_, _| T::lit(rng.random::<f64>() * 2.0 - 1.0));
    let mut q = QR::new(start).q();
    let mut z = DMatrix::<T>::zeros(n, BLOCK);
    let apply = |src: &DMatrix<T>, dst: &mut DMatrix<T>| {
        for (s, d) in src.as_slice().chunks_exact(n).zip(dst.as_mut_slice().chunks_exact_mut(n)) {
            w.mul_vec_into(s, d);
        }
    };

    let tol = T::lit(1e-13);
    let mut prev: Option<T> = None;
    let mut stable = 0;
    let mut estimate = T::zero();
    for _ in 0..MAX_ROUNDS {
        apply(&q, &mut z);
        if z.norm() == T::zero() {
            return T::zero();
        }
        estimate = max_modulus(q.transpose() * &z);
        if let Some(p) = prev {
            if (estimate - p).abs() <= tol * estimate {
                stable += 1;
                if stable >= 2 {
                    return estimate;
                }
            } else {
                stable = 0;
            }
        }
        prev = Some(estimate);
        for _ in 1..INNER {
            std::mem::swap(&mut q, &mut z);
            for mut col in q.column_iter_mut() {
                let norm = col.norm();
                if norm > T::zero() {
                    col /= norm;
                }
            }
            apply(&q, &mut z);
        }
        q = QR::new(z.clone()).q();
    }
    estimate
}

/// Rescales `w` in place so its spectral radius equals `rho`.
pub fn rescale_to_spectral_radius<T: Real>(w: &mut RecurrentWeights<T>, rho: T) -> Result<()> {
    let radius = spectral_radius(w);
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::ZeroSpectralRadius { attempts: 1 });
    }
    w.scale(rho / radius);
    Ok(())
}

/// A directed graph on `n` nodes has a nilpotent weighted adjacency (for generic
/// weights) exactly when it has no cycle, self-loops included.
fn is_acyclic(n: usize, links: &[(usize, usize, f64)]) -> bool {
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    // entry (i, j) feeds node j into node i
    for &(i, j, _) in links {
        out[j].push(i);
        indeg[i] += 1;
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &t in &out[v] {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                stack.push(t);
            }
        }
    }
    seen == n
}

/// Random recurrent network with input coupling and constant bias.
#[derive(Clone, Debug)]
pub struct Reservoir<T: Real> {
    weights: RecurrentWeights<T>,
    input: DMatrix<T>,
    bias: DVector<T>,
    params: ReservoirParams<T>,
}

/// Reservoir node activations.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirState<T: Real> {
    pub r: DVector<T>,
}

impl<T: Real> ReservoirState<T> {
    pub fn zeros(n: usize) -> Self {
        ReservoirState { r: DVector::zeros(n) }
    }

    pub fn from_vec(v: Vec<T>) -> Self {
        ReservoirState { r: DVector::from_vec(v) }
    }

    pub fn as_slice(&self) -> &[T] {
        self.r.as_slice()
    }
}

const MAX_DRAWS: usize = 100;

/// Draws a reservoir: each ordered pair of nodes is linked with probability
/// `avg_degree / N`, link weights are uniform on `[-1, 1]`, the matrix is rescaled
/// to the requested spectral radius, and input weights are uniform on
/// `[-input_scale, input_scale]`. Graph, link weights and input weights come from
/// separate streams seeded by one draw from `rng`.
pub fn build_reservoir<T: Real, R: Rng + ?Sized>(
    params: &ReservoirParams<T>,
    d: usize,
    rng: &mut R,
) -> Result<Reservoir<T>> {
    params.validate()?;
    if d == 0 {
        return Err(Error::InvalidParameter("input dimension must be positive".into()));
    }
    let seed: u64 = rng.random();
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(s);
        r
    };
    let (mut graph_rng, mut weight_rng, mut input_rng) = (stream(0), stream(1), stream(2));

    let n = params.n_nodes;
    let p = (params.avg_degree / T::from_usize_lossy(n)).as_f64();
    let sparse = p < RecurrentWeights::<T>::SPARSE_DENSITY;

    let mut weights = None;
    for _ in 0..MAX_DRAWS {
        let mut links = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if graph_rng.random::<f64>() < p {
                    links.push((i, j, weight_rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        if params.spectral_radius == T::zero() {
            weights = Some(RecurrentWeights::from_entries(n, &[], sparse));
            break;
        }
        if is_acyclic(n, &links) {
            continue;
        }
        let entries: Vec<(usize, usize, T)> = links.iter().map(|&(i, j, v)| (i, j, T::lit(v))).collect();
        let mut w = RecurrentWeights::from_entries(n, &entries, sparse);
        if rescale_to_spectral_radius(&mut w, params.spectral_radius).is_ok() {
            weights = Some(w);
            break;
        }
    }
    let weights = weights.ok_or(Error::ZeroSpectralRadius { attempts: MAX_DRAWS })?;

    let sigma = params.input_scale.as_f64();
    let input = DMatrix::from_row_iterator(
        n,
        d,
        (0..n * d).map(|_| T::lit((input_rng.random::<f64>() * 2.0 - 1.0) * sigma)),
    );
    Ok(Reservoir::from_parts(weights, input, params.clone()))
}

impl<T: Real> Reservoir<T> {
    /// Assembles a reservoir from explicit matrices (no rescaling is applied).
    pub fn from_parts(weights: RecurrentWeights<T>, input: DMatrix<T>, params: ReservoirParams<T>) -> Self {
        assert_eq!(weights.n(), input.nrows(), "input matrix rows must match node count");
        let bias = DVector::from_element(weights.n(), params.bias);
        let params = ReservoirParams { n_nodes: weights.n(), ..params };
        Reservoir { weights, input, bias, params }
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.n()
    }

    pub fn input_dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn weights(&self) -> &RecurrentWeights<T> {
        &self.weights
    }

    pub fn input_matrix(&self) -> &DMatrix<T> {
        &self.input
    }

    pub fn bias(&self) -> &DVector<T> {
        &self.bias
    }

    pub fn params(&self) -> &ReservoirParams<T> {
        &self.params
    }

    /// `r <- (1 - leak) r + leak tanh(A r + B u + c)` in place; `scratch` is resized as needed.
    pub fn advance(&self, r: &mut [T], u: &[T], scratch: &mut Vec<T>) {
        let n = self.n_nodes();
        debug_assert_eq!(r.len(), n);
        debug_assert_eq!(u.len(), self.input_dim());
        scratch.resize(n, T::zero());
        self.weights.mul_vec_into(r, scratch);
        for (j, col) in self.input.as_slice().chunks_exact(n).enumerate() {
            let uj = u[j];
            for (s, b) in scratch.iter_mut().zip(col) {
                *s += *b * uj;
            }
        }
        let alpha = self.params.leak;
        let keep = T::one() - alpha;
        for ((ri, s), c) in r.iter_mut().zip(scratch.iter()).zip(self.bias.iter()) {
            *ri = keep * *ri + alpha * (*s + *c).tanh();
        }
    }

    pub fn update(&self, state: &ReservoirState<T>, u: &[T]) -> ReservoirState<T> {
        assert_eq!(state.r.len(), self.n_nodes(), "state size");
        assert_eq!(u.len(), self.input_dim(), "input size");
        let mut next = state.clone();
        self.advance(next.r.as_mut_slice(), u, &mut Vec::new());
        next
    }

    /// Drives the reservoir from the zero state through `inputs`.
    pub fn warmup<'a, I>(&self, inputs: I) -> ReservoirState<T>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        self.drive(ReservoirState::zeros(self.n_nodes()), inputs)
    }

    pub fn drive<'a, I>(&self, mut state: ReservoirState<T>, inputs: I) -> ReservoirState<T>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let mut scratch = Vec::new();
        for u in inputs {
            self.advance(state.r.as_mut_slice(), u, &mut scratch);
        }
        state
    }
}

/// Steps used for the synchronization fit at most.
pub const SYNC_FIT_STEPS: usize = 500;
/// Gap below which the log-distance is treated as numerical noise.
pub const SYNC_NOISE_FLOOR: f64 = 1e-12;

/// Characteristic synchronization time: two copies started at `r1` and `r2` are
/// driven by the same inputs, and `-1/slope` of a least-squares line through
/// `ln |r1(t) - r2(t)|` against `t` is returned. The fit covers at most the first
/// [`SYNC_FIT_STEPS`] steps and stops once the gap reaches [`SYNC_NOISE_FLOOR`].
pub fn estimate_sync_time<'a, T: Real, I>(
    res: &Reservoir<T>,
    inputs: I,
    r1: &ReservoirState<T>,
    r2: &ReservoirState<T>,
    dt: T,
) -> Result<T>
where
    I: IntoIterator<Item = &'a [T]>,
{
    let gap = |a: &DVector<T>, b: &DVector<T>| (a - b).norm();
    let g0 = gap(&r1.r, &r2.r);
    if !(g0 > T::zero()) {
        return Err(Error::InvalidParameter("initial reservoir states must differ".into()));
    }
    let floor = T::lit(SYNC_NOISE_FLOOR);
    let (mut a, mut b) = (r1.r.clone(), r2.r.clone());
    let mut scratch = Vec::new();
    let mut points = vec![(T::zero(), g0.ln())];
    let mut collapsed = false;
    let mut consumed = 0;
    for (step, u) in inputs.into_iter().take(SYNC_FIT_STEPS).enumerate() {
        consumed += 1;
        res.advance(a.as_mut_slice(), u, &mut scratch);
        res.advance(b.as_mut_slice(), u, &mut scratch);
        let g = gap(&a, &b);
        if !(g > floor) {
            collapsed = true;
            break;
        }
        points.push((dt * T::from_usize_lossy(step + 1), g.ln()));
    }
    if points.len() < 2 {
        if collapsed {
            // gap fell through the floor within one step
            return Ok(dt / (g0 / floor).ln().max(T::one()));
        }
        return Err(Error::InsufficientData { needed: 2, available: consumed });
    }
    let m = T::from_usize_lossy(points.len());
    let (st, sy) = points.iter().fold((T::zero(), T::zero()), |(a, b), (t, y)| (a + *t, b + *y));
    let (mt, my) = (st / m, sy / m);
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (t, y) in &points {
        sxy += (*t - mt) * (*y - my);
        sxx += (*t - mt) * (*t - mt);
    }
    let slope = sxy / sxx;
    if !(slope < T::zero()) {
        return Err(Error::NonContracting { slope: slope.as_f64() });
    }
    Ok(-T::one() / slope)
}

/// Warm-up length in steps: ten synchronization times, capped at a quarter of the training data.
pub fn recommended_warmup_steps<T: Real>(t_sync: T, dt: T, n_train: usize) -> usize {
    let steps = (T::lit(10.0) * t_sync / dt).as_f64().ceil().max(0.0) as usize;
    steps.min(n_train / 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn scalar_reservoir(a: f64, b: f64, c: f64, leak: f64) -> Reservoir<f64> {
        let params = ReservoirParams { n_nodes: 1, avg_degree: 1.0, bias: c, leak, ..Default::default() };
        Reservoir::from_parts(
            RecurrentWeights::Dense(DMatrix::from_element(1, 1, a)),
            DMatrix::from_element(1, 1, b),
            params,
        )
    }

    #[test]
    fn link_count_matches_binomial() {
        let params = ReservoirParams::<f64> { n_nodes: 50, ..Default::default() };
        for seed in 0..5 {
            let res = build_reservoir(&params, 3, &mut rng(seed)).unwrap();
            let links = res.weights().nnz() as f64;
            // Binomial(2500, 0.2): mean 500, sd 20
            assert!((links - 500.0).abs() < 4.0 * 20.0, "links {links}");
        }
    }

    #[test]
    fn rescale_diagonal() {
        let mut w = RecurrentWeights::Dense(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])));
        rescale_to_spectral_radius(&mut w, 0.9).unwrap();
        let d = w.to_dense();
        assert_relative_eq!(d[(0, 0)], 0.9, epsilon = 1e-12);
        assert_relative_eq!(d[(1, 1)], 0.45, epsilon = 1e-12);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn zero_radius_request_gives_zero_matrix() {
        let params = ReservoirParams::<f64> { spectral_radius: 0.0, ..Default::default() };
        let res = build_reservoir(&params, 3, &mut rng(1)).unwrap();
        assert!(res.weights().to_dense().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn nilpotent_patterns_are_redrawn() {
        // two nodes, sparse: many draws are acyclic, yet a cycle eventually appears
        let params = ReservoirParams::<f64> { n_nodes: 2, avg_degree: 0.6, ..Default::default() };
        for seed in 0..10 {
            let res = build_reservoir(&params, 1, &mut rng(seed)).unwrap();
            assert_relative_eq!(spectral_radius(res.weights()), 0.9, max_relative = 1e-10);
        }
        assert!(!is_acyclic(1, &[(0, 0, 1.0)]));
        assert!(is_acyclic(2, &[(0, 1, 1.0)]));
    }

    #[test]
    fn rotation_block_radius() {
        // complex dominant pair: power iteration on a single vector would oscillate
        let n = 40;
        let mut m = DMatrix::zeros(n, n);
        m[(0, 1)] = -1.0;
        m[(1, 0)] = 1.0;
        for i in 2..n {
            m[(i, i)] = 0.5 * (i as f64 / n as f64);
        }
        let r = spectral_radius(&RecurrentWeights::Dense(m));
        assert_relative_eq!(r, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn input_matrix_bounded() {
        let params = ReservoirParams::<f64> { input_scale: 0.3, ..Default::default() };
        let res = build_reservoir(&params, 3, &mut rng(2)).unwrap();
        assert_eq!(res.input_matrix().shape(), (50, 3));
        assert!(res.input_matrix().iter().all(|b| b.abs() <= 0.3));
        assert!(res.bias().iter().all(|c| *c == 0.5));
    }

    #[test]
    fn deterministic_construction() {
        let params = ReservoirParams::<f64>::default();
        let a = build_reservoir(&params, 3, &mut rng(7)).unwrap();
        let b = build_reservoir(&params, 3, &mut rng(7)).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.input_matrix(), b.input_matrix());
        let c = build_reservoir(&params, 3, &mut rng(8)).unwrap();
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn sparse_and_dense_agree() {
        let entries = vec![(0, 1, 0.5), (1, 0, -0.25), (2, 2, 0.75), (2, 0, 0.1)];
        let s = RecurrentWeights::from_entries(3, &entries, true);
        let d = RecurrentWeights::from_entries(3, &entries, false);
        let x = [0.3, -1.2, 2.0];
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        s.mul_vec_into(&x, &mut a);
        d.mul_vec_into(&x, &mut b);
        assert_eq!(a, b);
        assert_eq!(s.to_dense(), d.to_dense());
    }

    #[test]
    fn update_examples() {
        let res = scalar_reservoir(0.5, 1.0, 0.0, 1.0);
        let next = res.update(&ReservoirState::from_vec(vec![0.2]), &[0.3]);
        assert_relative_eq!(next.r[0], 0.4f64.tanh(), epsilon = 1e-15);
        assert_relative_eq!(next.r[0], 0.379_948_962_255_224_9, epsilon = 1e-15);

        let silent = scalar_reservoir(0.0, 0.0, 0.0, 1.0);
        assert_eq!(silent.update(&ReservoirState::from_vec(vec![0.7]), &[5.0]).r[0], 0.0);
    }

    #[test]
    fn frozen_reservoir_at_zero_leak() {
        // leak 0 is outside the validated range but the update rule must still be the identity
        let mut res = scalar_reservoir(0.5, 1.0, 0.3, 1.0);
        res.params.leak = 0.0;
        let s = ReservoirState::from_vec(vec![0.42]);
        assert_eq!(res.update(&s, &[1.0]), s);
    }

    #[test]
    fn warmup_of_empty_sequence_is_zero() {
        let res = build_reservoir(&ReservoirParams::<f64>::default(), 3, &mut rng(3)).unwrap();
        let s = res.warmup(std::iter::empty::<&[f64]>());
        assert!(s.r.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn memoryless_reservoir_syncs_within_one_step() {
        let params = ReservoirParams::<f64> { spectral_radius: 0.0, ..Default::default() };
        let res = build_reservoir(&params, 1, &mut rng(4)).unwrap();
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64).sin()]).collect();
        let t = estimate_sync_time(
            &res,
            inputs.iter().map(|v| v.as_slice()),
            &ReservoirState::zeros(50),
            &ReservoirState::from_vec(vec![0.5; 50]),
            0.06,
        )
        .unwrap();
        assert!(t > 0.0 && t <= 0.06);
    }

    #[test]
    fn warmup_cap() {
        assert_eq!(recommended_warmup_steps(0.12, 0.06, 10_000), 20);
        assert_eq!(recommended_warmup_steps(10.0, 0.06, 400), 100);
    }

    #[test]
    fn single_precision_update() {
        let params = ReservoirParams::<f32>::default();
        let res = build_reservoir(&params, 3, &mut rng(5)).unwrap();
        let s = res.warmup([[0.1f32, 0.2, 0.3].as_slice(); 20]);
        assert!(s.r.iter().all(|x| x.abs() <= 1.0));
        assert_relative_eq!(spectral_radius(res.weights()), 0.9f32, max_relative = 1e-4);
    }
}
