//! Finite-state coupled Feynman–Kac models.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use crate::couplings::Categorical;
use crate::error::{Result, SmcError};
use crate::fk::{DensityView, FeynmanKacModel, Side};
use crate::rng::SmcRng;

/// Largest supported number of atoms.
pub const MAX_ATOMS: usize = 64;

const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Raw ingredients of a [`FiniteModel`].
///
/// Time-indexed entries are lists: `pot[t]` is `G_t`, `trans_*[t]` is the
/// kernel producing time `t + 1`. Times past the end of a list reuse its last
/// entry. `trans_coupled` matrices are `K² × K²` with row `x·K + y` (input
/// pair) and column `u·K + v` (output pair).
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteModelParts {
    pub states: Vec<f64>,
    pub init_f: Vec<f64>,
    pub init_c: Vec<f64>,
    pub init_coupled: Array2<f64>,
    pub pot: Vec<Vec<f64>>,
    pub trans_f: Vec<Array2<f64>>,
    pub trans_c: Vec<Array2<f64>>,
    pub trans_coupled: Vec<Array2<f64>>,
}

/// Finite state space specialization with full transition matrices.
///
/// States are real atoms in strictly increasing order; the order is the one
/// used by the quantile coupling.
#[derive(Clone, Debug)]
pub struct FiniteModel {
    parts: FiniteModelParts,
    init_samplers: [Categorical; 2],
    init_coupled_sampler: Categorical,
    kernel_samplers: [Vec<Vec<Categorical>>; 2],
    coupled_samplers: Vec<Vec<Categorical>>,
    bound: f64,
}

fn invalid(msg: impl Into<String>) -> SmcError {
    SmcError::InvalidModel(msg.into())
}

fn check_probability(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(invalid(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(invalid(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn check_stochastic(m: &Array2<f64>, size: usize, what: &str) -> Result<()> {
    if m.dim() != (size, size) {
        return Err(invalid(format!(
            "{what} has shape {:?}, expected {size}×{size}",
            m.dim()
        )));
    }
    for (r, row) in m.rows().into_iter().enumerate() {
        check_probability(row.as_slice().unwrap_or(&row.to_vec()), &format!("{what} row {r}"))?;
    }
    Ok(())
}

impl FiniteModel {
    pub fn new(parts: FiniteModelParts) -> Result<Self> {
        let k = parts.states.len();
        if k == 0 || k > MAX_ATOMS {
            return Err(invalid(format!("{k} atoms (1..={MAX_ATOMS} supported)")));
        }
        if parts.states.windows(2).any(|w| !(w[0] < w[1])) || parts.states.iter().any(|s| !s.is_finite()) {
            return Err(invalid("states must be finite and strictly increasing"));
        }
        for (v, what) in [(&parts.init_f, "init_f"), (&parts.init_c, "init_c")] {
            if v.len() != k {
                return Err(invalid(format!("{what} has {} entries, expected {k}", v.len())));
            }
            check_probability(v, what)?;
        }
        if parts.init_coupled.dim() != (k, k) {
            return Err(invalid("init_coupled must be K×K"));
        }
        check_marginals(&parts.init_coupled, &parts.init_f, &parts.init_c, "init_coupled")?;
        if parts.pot.is_empty()
            || parts.trans_f.is_empty()
            || parts.trans_c.is_empty()
            || parts.trans_coupled.is_empty()
        {
            return Err(invalid(
                "pot, trans_f, trans_c and trans_coupled need at least one slice",
            ));
        }
        let mut bound = 0.0f64;
        for (t, g) in parts.pot.iter().enumerate() {
            if g.len() != k || g.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(invalid(format!("pot {t} must hold {k} finite nonnegative values")));
            }
            bound = g.iter().fold(bound, |b, x| b.max(*x));
        }
        for (t, m) in parts.trans_f.iter().enumerate() {
            check_stochastic(m, k, &format!("trans_f {}", t + 1))?;
        }
        for (t, m) in parts.trans_c.iter().enumerate() {
            check_stochastic(m, k, &format!("trans_c {}", t + 1))?;
        }
        let slices = parts
            .trans_f
            .len()
            .max(parts.trans_c.len())
            .max(parts.trans_coupled.len());
        for t in 0..slices {
            let tc = &parts.trans_coupled[t.min(parts.trans_coupled.len() - 1)];
            check_stochastic(tc, k * k, &format!("trans_coupled {}", t + 1))?;
            let mf = &parts.trans_f[t.min(parts.trans_f.len() - 1)];
            let mc = &parts.trans_c[t.min(parts.trans_c.len() - 1)];
            for x in 0..k {
                for y in 0..k {
                    let row = tc.row(x * k + y);
                    let out = Array2::from_shape_fn((k, k), |(u, v)| row[u * k + v]);
                    check_marginals(
                        &out,
                        &mf.row(x).to_vec(),
                        &mc.row(y).to_vec(),
                        &format!("trans_coupled {} row ({x},{y})", t + 1),
                    )?;
                }
            }
        }

        let cat = |v: &[f64]| Categorical::new(v);
        let rows = |ms: &[Array2<f64>]| -> Result<Vec<Vec<Categorical>>> {
            ms.iter()
                .map(|m| m.rows().into_iter().map(|r| cat(&r.to_vec())).collect())
                .collect()
        };
        Ok(FiniteModel {
            init_samplers: [cat(&parts.init_f)?, cat(&parts.init_c)?],
            init_coupled_sampler: cat(&parts.init_coupled.iter().copied().collect::<Vec<_>>())?,
            kernel_samplers: [rows(&parts.trans_f)?, rows(&parts.trans_c)?],
            coupled_samplers: rows(&parts.trans_coupled)?,
            bound,
            parts,
        })
    }

    pub fn parts(&self) -> &FiniteModelParts {
        &self.parts
    }

    pub fn num_states(&self) -> usize {
        self.parts.states.len()
    }

    pub fn states(&self) -> &[f64] {
        &self.parts.states
    }

    pub fn init(&self, side: Side) -> &[f64] {
        match side {
            Side::Fine => &self.parts.init_f,
            Side::Coarse => &self.parts.init_c,
        }
    }

    pub fn init_coupled(&self) -> &Array2<f64> {
        &self.parts.init_coupled
    }

    /// `G_n` as a vector over atoms.
    pub fn pot(&self, n: usize) -> Array1<f64> {
        Array1::from(self.parts.pot[n.min(self.parts.pot.len() - 1)].clone())
    }

    /// `M_n^s` for `n ≥ 1`.
    pub fn trans(&self, side: Side, n: usize) -> &Array2<f64> {
        assert!(n >= 1, "kernels are indexed from time 1");
        let list = match side {
            Side::Fine => &self.parts.trans_f,
            Side::Coarse => &self.parts.trans_c,
        };
        &list[(n - 1).min(list.len() - 1)]
    }

    /// Coupled kernel `M̌_n` for `n ≥ 1` (`K² × K²`).
    pub fn trans_coupled(&self, n: usize) -> &Array2<f64> {
        assert!(n >= 1, "kernels are indexed from time 1");
        let list = &self.parts.trans_coupled;
        &list[(n - 1).min(list.len() - 1)]
    }

    /// Index of the atom at `x`, if any.
    pub fn atom_index(&self, x: f64) -> Option<usize> {
        self.parts.states.binary_search_by(|s| s.total_cmp(&x)).ok()
    }

    fn atom(&self, x: &[f64]) -> usize {
        self.atom_index(x[0])
            .unwrap_or_else(|| panic!("{} is not an atom of the finite model", x[0]))
    }

    fn slice_index(len: usize, n: usize) -> usize {
        (n - 1).min(len - 1)
    }

    /// Serializes to the plain-text table format (see [`FiniteModel::from_text`]).
    pub fn to_text(&self) -> String {
        let p = &self.parts;
        let mut out = String::from("# coupled-smc finite model\n");
        let line = |out: &mut String, head: &str, values: &mut dyn Iterator<Item = f64>| {
            out.push_str(head);
            for v in values {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        };
        line(&mut out, "states", &mut p.states.iter().copied());
        line(&mut out, "init_f", &mut p.init_f.iter().copied());
        line(&mut out, "init_c", &mut p.init_c.iter().copied());
        let matrix = |out: &mut String, head: String, m: &Array2<f64>| {
            out.push_str(&head);
            out.push('\n');
            for row in m.rows() {
                let values: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&values.join(" "));
                out.push('\n');
            }
        };
        matrix(&mut out, "init_coupled".into(), &p.init_coupled);
        for (t, g) in p.pot.iter().enumerate() {
            line(&mut out, &format!("pot {t}"), &mut g.iter().copied());
        }
        for (t, m) in p.trans_f.iter().enumerate() {
            matrix(&mut out, format!("trans_f {}", t + 1), m);
        }
        for (t, m) in p.trans_c.iter().enumerate() {
            matrix(&mut out, format!("trans_c {}", t + 1), m);
        }
        for (t, m) in p.trans_coupled.iter().enumerate() {
            matrix(&mut out, format!("trans_coupled {}", t + 1), m);
        }
        out
    }

    /// Parses the plain-text table format.
    ///
    /// ```text
    /// # comment lines and blank lines are ignored
    /// states  s_1 … s_K              strictly increasing atoms
    /// init_f  p_1 … p_K
    /// init_c  q_1 … q_K
    /// init_coupled                   followed by K rows of K values
    /// pot t   g_1 … g_K              one line per t = 0, 1, …
    /// trans_f t                      t = 1, 2, …; followed by K rows of K values
    /// trans_c t                      same layout
    /// trans_coupled t                followed by K² rows of K² values;
    ///                                row x·K+y is the input pair (x, y),
    ///                                column u·K+v the output pair (u, v)
    /// ```
    ///
    /// Time indices must be consecutive; the last slice of each list is
    /// reused for later times.
    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<(usize, Vec<&str>)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                (
                    i + 1,
                    l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>(),
                )
            })
            .filter(|(_, t)| !t.is_empty())
            .collect();
        let mut parser = TableParser { lines, pos: 0 };
        let mut states = None;
        let mut init_f = None;
        let mut init_c = None;
        let mut init_coupled = None;
        let mut pot: Vec<Vec<f64>> = Vec::new();
        let mut trans: [Vec<Array2<f64>>; 3] = Default::default();
        while let Some((line, tokens)) = parser.next_line() {
            let head = tokens[0];
            let k = || -> Result<usize> {
                states
                    .as_ref()
                    .map(Vec::len)
                    .ok_or_else(|| parse_err(line, "`states` must come first"))
            };
            match head {
                "states" => states = Some(parse_values(line, &tokens[1..])?),
                "init_f" => init_f = Some(parse_values(line, &tokens[1..])?),
                "init_c" => init_c = Some(parse_values(line, &tokens[1..])?),
                "init_coupled" => {
                    let k = k()?;
                    init_coupled = Some(parser.matrix(k, line)?);
                }
                "pot" => {
                    expect_index(line, &tokens, pot.len())?;
                    pot.push(parse_values(line, &tokens[2..])?);
                }
                "trans_f" | "trans_c" | "trans_coupled" => {
                    let slot = match head {
                        "trans_f" => 0,
                        "trans_c" => 1,
                        _ => 2,
                    };
                    expect_index(line, &tokens, trans[slot].len() + 1)?;
                    let k = k()?;
                    let size = if slot == 2 { k * k } else { k };
                    let m = parser.matrix(size, line)?;
                    trans[slot].push(m);
                }
                other => return Err(parse_err(line, &format!("unknown section {other:?}"))),
            }
        }
        let missing = |what: &str| parse_err(0, &format!("missing section {what}"));
        let [trans_f, trans_c, trans_coupled] = trans;
        FiniteModel::new(FiniteModelParts {
            states: states.ok_or_else(|| missing("states"))?,
            init_f: init_f.ok_or_else(|| missing("init_f"))?,
            init_c: init_c.ok_or_else(|| missing("init_c"))?,
            init_coupled: init_coupled.ok_or_else(|| missing("init_coupled"))?,
            pot,
            trans_f,
            trans_c,
            trans_coupled,
        })
    }
}

fn parse_err(line: usize, message: &str) -> SmcError {
    SmcError::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_values(line: usize, tokens: &[&str]) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, &format!("{t:?} is not a number")))
        })
        .collect()
}

fn expect_index(line: usize, tokens: &[&str], expected: usize) -> Result<()> {
    let got = tokens
        .get(1)
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| parse_err(line, "missing time index"))?;
    if got != expected {
        return Err(parse_err(line, &format!("time index {got}, expected {expected}")));
    }
    Ok(())
}

struct TableParser<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> TableParser<'a> {
    fn next_line(&mut self) -> Option<(usize, Vec<&'a str>)> {
        let item = self.lines.get(self.pos).cloned();
        self.pos += 1;
        item
    }

    fn matrix(&mut self, size: usize, header_line: usize) -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(size * size);
        for r in 0..size {
            let (line, tokens) = self
                .next_line()
                .ok_or_else(|| parse_err(header_line, &format!("matrix ends after {r} of {size} rows")))?;
            if tokens.len() != size {
                return Err(parse_err(
                    line,
                    &format!("row has {} values, expected {size}", tokens.len()),
                ));
            }
            data.extend(parse_values(line, &tokens)?);
        }
        Ok(Array2::from_shape_vec((size, size), data).expect("shape checked"))
    }
}

fn check_marginals(m: &Array2<f64>, rows: &[f64], cols: &[f64], what: &str) -> Result<()> {
    let k = rows.len();
    for i in 0..k {
        let r: f64 = m.row(i).sum();
        let c: f64 = m.column(i).sum();
        if (r - rows[i]).abs() > STOCHASTIC_TOLERANCE || (c - cols[i]).abs() > STOCHASTIC_TOLERANCE {
            return Err(invalid(format!(
                "{what} does not have the prescribed marginals at atom {i}"
            )));
        }
    }
    if m.iter().any(|x| !(*x >= 0.0)) {
        return Err(invalid(format!("{what} has a negative entry")));
    }
    Ok(())
}

impl FeynmanKacModel for FiniteModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn potential_bound(&self) -> f64 {
        self.bound
    }

    fn potential(&self, n: usize, x: &[f64]) -> f64 {
        self.parts.pot[n.min(self.parts.pot.len() - 1)][self.atom(x)]
    }

    fn sample_init(&self, side: Side, rng: &mut SmcRng, out: &mut [f64]) {
        let k = self.init_samplers[side as usize].sample(rng);
        out[0] = self.parts.states[k];
    }

    fn sample_init_coupled(&self, rng: &mut SmcRng, out_f: &mut [f64], out_c: &mut [f64]) {
        let cell = self.init_coupled_sampler.sample(rng);
        let k = self.num_states();
        out_f[0] = self.parts.states[cell / k];
        out_c[0] = self.parts.states[cell % k];
    }

    fn sample_kernel(&self, side: Side, n: usize, x: &[f64], rng: &mut SmcRng, out: &mut [f64]) {
        let list = &self.kernel_samplers[side as usize];
        let row = &list[Self::slice_index(list.len(), n)][self.atom(x)];
        out[0] = self.parts.states[row.sample(rng)];
    }

    fn sample_kernel_coupled(
        &self,
        n: usize,
        x_f: &[f64],
        x_c: &[f64],
        rng: &mut SmcRng,
        out_f: &mut [f64],
        out_c: &mut [f64],
    ) {
        let k = self.num_states();
        let list = &self.coupled_samplers;
        let row = &list[Self::slice_index(list.len(), n)][self.atom(x_f) * k + self.atom(x_c)];
        let cell = row.sample(rng);
        out_f[0] = self.parts.states[cell / k];
        out_c[0] = self.parts.states[cell % k];
    }

    fn densities(&self) -> Option<&dyn DensityView> {
        Some(self)
    }

    fn name(&self) -> &str {
        "finite"
    }
}

/// Probability mass functions with respect to counting measure.
impl DensityView for FiniteModel {
    fn init_density(&self, side: Side, y: &[f64]) -> f64 {
        self.atom_index(y[0]).map_or(0.0, |k| self.init(side)[k])
    }

    fn kernel_density(&self, side: Side, n: usize, x: &[f64], y: &[f64]) -> f64 {
        match self.atom_index(y[0]) {
            Some(j) => self.trans(side, n)[[self.atom(x), j]],
            None => 0.0,
        }
    }
}

/// Builders for coupled kernels and initial couplings of finite models.
pub mod build {
    use super::*;

    /// Product coupling `p ⊗ q`.
    pub fn independent(p: &[f64], q: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((p.len(), q.len()), |(i, j)| p[i] * q[j])
    }

    /// Maximal coupling of two probability vectors.
    pub fn maximal(p: &[f64], q: &[f64]) -> Array2<f64> {
        let k = p.len();
        let min: Vec<f64> = p.iter().zip(q).map(|(a, b)| a.min(*b)).collect();
        let overlap: f64 = min.iter().sum();
        let mut m = Array2::zeros((k, k));
        for i in 0..k {
            m[[i, i]] = min[i];
        }
        let residual = 1.0 - overlap;
        if residual > 1e-15 {
            for i in 0..k {
                for j in 0..k {
                    m[[i, j]] += (p[i] - min[i]) * (q[j] - min[j]) / residual;
                }
            }
        }
        m
    }

    /// Comonotone (quantile) coupling of two probability vectors on the same
    /// ordered atoms.
    pub fn comonotone(p: &[f64], q: &[f64]) -> Array2<f64> {
        let k = p.len();
        let mut m = Array2::zeros((k, k));
        let (mut i, mut j) = (0usize, 0usize);
        let (mut left_p, mut left_q) = (p[0], q[0]);
        while i < k && j < k {
            let mass = left_p.min(left_q);
            m[[i, j]] += mass;
            left_p -= mass;
            left_q -= mass;
            if left_p <= 1e-15 {
                i += 1;
                if i < k {
                    left_p = p[i];
                }
            }
            if left_q <= 1e-15 {
                j += 1;
                if j < k {
                    left_q = q[j];
                }
            }
        }
        m
    }

    /// Coupled kernel whose row `(x, y)` is `couple(M^f(x,·), M^c(y,·))`.
    pub fn coupled_kernel(
        trans_f: &Array2<f64>,
        trans_c: &Array2<f64>,
        couple: impl Fn(&[f64], &[f64]) -> Array2<f64>,
    ) -> Array2<f64> {
        let k = trans_f.nrows();
        let mut out = Array2::zeros((k * k, k * k));
        for x in 0..k {
            for y in 0..k {
                let cell = couple(&trans_f.row(x).to_vec(), &trans_c.row(y).to_vec());
                for u in 0..k {
                    for v in 0..k {
                        out[[x * k + y, u * k + v]] = cell[[u, v]];
                    }
                }
            }
        }
        out
    }
}
