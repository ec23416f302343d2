//! Markov blanket discovery on discrete samples.
//!
//! Conditional independence is judged by the plug-in conditional mutual
//! information against a permutation null: `x` is shuffled within each
//! stratum of the conditioning set, which keeps every stratum's `x` and `y`
//! margins fixed. Such a shuffle only changes the `x`-by-`y` contingency
//! table of each stratum, and that table is multivariate hypergeometric given
//! its margins, so null tables are sampled directly instead of shuffling rows.
//! The null therefore depends on the data only through its counts, and so
//! does every result here: row order never matters.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Hypergeometric};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Named discrete columns, values `0..arity`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleTable {
    names: Vec<String>,
    arities: Vec<usize>,
    columns: Vec<Vec<u32>>,
}

impl SampleTable {
    /// Builds a table from rows, inferring each arity as `max + 1`.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidTable("table has no rows".into()));
        }
        let width = names.len();
        if width == 0 {
            return Err(Error::InvalidTable("table has no columns".into()));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != width {
            return Err(Error::InvalidTable("duplicate column name".into()));
        }
        let mut columns = vec![Vec::with_capacity(rows.len()); width];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidTable(format!(
                    "row {r} has {} cells, expected {width}",
                    row.len()
                )));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                let v = u32::try_from(v).map_err(|_| Error::InvalidTable(format!("value {v} too large")))?;
                col.push(v);
            }
        }
        Ok(Self::from_columns_unchecked(names, columns))
    }

    fn from_columns_unchecked(names: Vec<String>, columns: Vec<Vec<u32>>) -> Self {
        let arities = columns
            .iter()
            .map(|c| c.iter().copied().max().unwrap_or(0) as usize + 1)
            .collect();
        Self {
            names,
            arities,
            columns,
        }
    }

    /// Reads CSV with a header row of variable names and non-negative
    /// integer cells.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::InvalidTable(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidTable(e.to_string()))?;
            let row = rec
                .iter()
                .map(|cell| {
                    cell.trim().parse::<usize>().map_err(|_| {
                        Error::InvalidTable(format!("row {}: {cell:?} is not a non-negative integer", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(names, &rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::InvalidTable(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn arity(&self, var: usize) -> usize {
        self.arities[var]
    }

    pub fn column(&self, var: usize) -> &[u32] {
        &self.columns[var]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Same data with rows reordered by `order`.
    /// The rows in `range`, in order.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        self.permute_rows(&range.collect::<Vec<_>>())
    }

    pub fn permute_rows(&self, order: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| order.iter().map(|&r| c[r]).collect())
            .collect();
        Self {
            names: self.names.clone(),
            arities: self.arities.clone(),
            columns,
        }
    }

    /// Counts `n[z][x][y]` with `z` the mixed-radix stratum of `cond`.
    fn contingency(&self, x: usize, y: usize, cond: &[usize]) -> Contingency {
        let (kx, ky) = (self.arities[x], self.arities[y]);
        let strata: usize = cond.iter().map(|&v| self.arities[v]).product();
        let mut counts = vec![0u64; strata * kx * ky];
        let (cx, cy) = (&self.columns[x], &self.columns[y]);
        for r in 0..self.num_rows() {
            let mut z = 0;
            for &v in cond {
                z = z * self.arities[v] + self.columns[v][r] as usize;
            }
            counts[(z * kx + cx[r] as usize) * ky + cy[r] as usize] += 1;
        }
        Contingency { kx, ky, strata, counts }
    }
}

struct Contingency {
    kx: usize,
    ky: usize,
    strata: usize,
    counts: Vec<u64>,
}

impl Contingency {
    fn stratum(&self, z: usize) -> &[u64] {
        let size = self.kx * self.ky;
        &self.counts[z * size..(z + 1) * size]
    }

    fn margins(&self, z: usize) -> (Vec<u64>, Vec<u64>) {
        let cell = self.stratum(z);
        let mut rows = vec![0; self.kx];
        let mut cols = vec![0; self.ky];
        for i in 0..self.kx {
            for j in 0..self.ky {
                rows[i] += cell[i * self.ky + j];
                cols[j] += cell[i * self.ky + j];
            }
        }
        (rows, cols)
    }

    /// Plug-in CMI, summing per-stratum mutual information weighted by
    /// stratum frequency.
    fn cmi(&self) -> f64 {
        let total: u64 = self.counts.iter().sum();
        let mut acc = 0.0;
        for z in 0..self.strata {
            acc += stratum_mi(self.stratum(z), &self.margins(z), self.ky);
        }
        (acc / total as f64).max(0.0)
    }
}

/// `sum_xy n_xy ln(n_xy n / (n_x n_y))` for one stratum (unnormalized).
fn stratum_mi(cell: &[u64], (rows, cols): &(Vec<u64>, Vec<u64>), ky: usize) -> f64 {
    let n: u64 = rows.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut acc = 0.0;
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let nij = cell[i * ky + j];
            if nij > 0 {
                let nij = nij as f64;
                acc += nij * (nij * n / (r as f64 * c as f64)).ln();
            }
        }
    }
    acc
}

/// Successes in `draws` draws without replacement from `population` items,
/// `successes` of them marked.
///
/// `rand_distr` rejects some ordinary parameters (its small-mode set-up
/// multiplies raw factorial ratios and loses range for populations in the
/// thousands); those fall back to inversion with log-space probabilities.
fn hypergeometric<R: Rng + ?Sized>(population: u64, successes: u64, draws: u64, rng: &mut R) -> u64 {
    match Hypergeometric::new(population, successes, draws) {
        Ok(d) => d.sample(rng),
        Err(_) => hypergeometric_inversion(population, successes, draws, rng),
    }
}

fn hypergeometric_inversion<R: Rng + ?Sized>(population: u64, successes: u64, draws: u64, rng: &mut R) -> u64 {
    let ln_choose = |n: u64, k: u64| ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    let failures = population - successes;
    let lo = draws.saturating_sub(failures);
    let hi = draws.min(successes);
    let ln_total = ln_choose(population, draws);
    let mut u: f64 = rng.random();
    for x in lo..hi {
        u -= (ln_choose(successes, x) + ln_choose(failures, draws - x) - ln_total).exp();
        if u < 0.0 {
            return x;
        }
    }
    hi
}

/// Draws a table with the given margins uniformly over row shuffles.
fn sample_table<R: Rng + ?Sized>(rows: &[u64], cols: &[u64], rng: &mut R) -> Vec<u64> {
    let ky = cols.len();
    let mut remaining_cols = cols.to_vec();
    let mut left: u64 = cols.iter().sum();
    let mut out = vec![0; rows.len() * ky];
    for (i, &r) in rows.iter().enumerate() {
        let mut draws = r;
        let mut pool = left;
        for j in 0..ky {
            if draws == 0 {
                break;
            }
            let k = if j + 1 == ky || remaining_cols[j] == pool {
                draws.min(remaining_cols[j])
            } else if remaining_cols[j] == 0 {
                0
            } else {
                hypergeometric(pool, remaining_cols[j], draws, rng)
            };
            out[i * ky + j] = k;
            pool -= remaining_cols[j];
            remaining_cols[j] -= k;
            draws -= k;
        }
        left -= r;
    }
    out
}

struct Query {
    x: usize,
    y: usize,
    cond: Vec<usize>,
}

fn resolve(t: &SampleTable, x: &str, y: &str, cond: &[&str]) -> Result<Query> {
    let x = t.index_of(x)?;
    let y = t.index_of(y)?;
    let cond = cond.iter().map(|c| t.index_of(c)).collect::<Result<Vec<_>>>()?;
    if x == y || cond.contains(&x) || cond.contains(&y) {
        return Err(Error::InvalidConfig(
            "x and y must differ and lie outside the conditioning set".into(),
        ));
    }
    Ok(Query { x, y, cond })
}

/// Plug-in `I(x; y | cond)` in nats.
pub fn empirical_cmi(t: &SampleTable, x: &str, y: &str, cond: &[&str]) -> Result<f64> {
    let q = resolve(t, x, y, cond)?;
    Ok(cmi_idx(t, q.x, q.y, &q.cond))
}

fn cmi_idx(t: &SampleTable, x: usize, y: usize, cond: &[usize]) -> f64 {
    t.contingency(x, y, cond).cmi()
}

/// `1 - alpha` quantile of the CMI under within-stratum permutation of `x`.
pub fn permutation_threshold<R: Rng + ?Sized>(
    t: &SampleTable,
    x: &str,
    y: &str,
    cond: &[&str],
    num_permutations: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    check_test_params(num_permutations, alpha)?;
    let q = resolve(t, x, y, cond)?;
    Ok(threshold_idx(t, q.x, q.y, &q.cond, num_permutations, alpha, rng))
}

/// Null CMI draws, exposed for calibration.
pub fn permutation_null<R: Rng + ?Sized>(
    t: &SampleTable,
    x: &str,
    y: &str,
    cond: &[&str],
    num_permutations: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let q = resolve(t, x, y, cond)?;
    Ok(null_idx(&t.contingency(q.x, q.y, &q.cond), num_permutations, rng))
}

fn check_test_params(num_permutations: usize, alpha: f64) -> Result<()> {
    if num_permutations < 100 {
        return Err(Error::InvalidConfig(format!(
            "at least 100 permutations needed, got {num_permutations}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn null_idx<R: Rng + ?Sized>(ct: &Contingency, num_permutations: usize, rng: &mut R) -> Vec<f64> {
    let total: u64 = ct.counts.iter().sum();
    let margins: Vec<_> = (0..ct.strata).map(|z| ct.margins(z)).collect();
    (0..num_permutations)
        .map(|_| {
            let mut acc = 0.0;
            for m in &margins {
                let cell = sample_table(&m.0, &m.1, rng);
                acc += stratum_mi(&cell, m, ct.ky);
            }
            (acc / total as f64).max(0.0)
        })
        .collect()
}

fn threshold_idx<R: Rng + ?Sized>(
    t: &SampleTable,
    x: usize,
    y: usize,
    cond: &[usize],
    num_permutations: usize,
    alpha: f64,
    rng: &mut R,
) -> f64 {
    let mut null = null_idx(&t.contingency(x, y, cond), num_permutations, rng);
    null.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * num_permutations as f64).ceil() as usize;
    null[rank.clamp(1, num_permutations) - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlanketConfig {
    pub alpha: f64,
    pub num_permutations: usize,
}

impl Default for BlanketConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            num_permutations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarStat {
    pub var: String,
    pub cmi: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlanketResult {
    pub target: String,
    /// Members in column order.
    pub blanket: Vec<String>,
    /// For every other variable, the final test of `target` against it
    /// given the rest of the blanket.
    pub stats: Vec<VarStat>,
}

/// Grow-shrink blanket search for `target`.
///
/// Grow: score every outside variable by `CMI(target; v | blanket)` and try
/// them from the highest score down (ties to the lower column), adding the
/// first that beats its permutation threshold; stop once none does. Shrink:
/// in column order, drop any member whose CMI given the other members no
/// longer beats its threshold.
pub fn grow_shrink<R: Rng + ?Sized>(
    t: &SampleTable,
    target: &str,
    cfg: &BlanketConfig,
    rng: &mut R,
) -> Result<BlanketResult> {
    check_test_params(cfg.num_permutations, cfg.alpha)?;
    let tgt = t.index_of(target)?;
    let test = |v: usize, cond: &[usize], rng: &mut R| -> (f64, f64) {
        let cmi = cmi_idx(t, tgt, v, cond);
        let thr = threshold_idx(t, tgt, v, cond, cfg.num_permutations, cfg.alpha, rng);
        (cmi, thr)
    };

    let mut blanket: Vec<usize> = Vec::new();
    loop {
        let mut scored: Vec<(usize, f64)> = (0..t.num_vars())
            .filter(|&v| v != tgt && !blanket.contains(&v))
            .map(|v| (v, cmi_idx(t, tgt, v, &blanket)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let added = scored.iter().find(|&&(v, cmi)| {
            let thr = threshold_idx(t, tgt, v, &blanket, cfg.num_permutations, cfg.alpha, rng);
            cmi > thr
        });
        match added {
            Some(&(v, _)) => blanket.push(v),
            None => break,
        }
    }

    blanket.sort_unstable();
    let mut i = 0;
    while i < blanket.len() {
        let v = blanket[i];
        let rest: Vec<usize> = blanket.iter().copied().filter(|&u| u != v).collect();
        let (cmi, thr) = test(v, &rest, rng);
        if cmi > thr {
            i += 1;
        } else {
            blanket.remove(i);
        }
    }

    let mut stats = Vec::new();
    for v in (0..t.num_vars()).filter(|&v| v != tgt) {
        let rest: Vec<usize> = blanket.iter().copied().filter(|&u| u != v).collect();
        let (cmi, threshold) = test(v, &rest, rng);
        stats.push(VarStat {
            var: t.names[v].clone(),
            cmi,
            threshold,
        });
    }
    Ok(BlanketResult {
        target: target.to_string(),
        blanket: blanket.iter().map(|&v| t.names[v].clone()).collect(),
        stats,
    })
}

/// Binary Bayesian network used to generate test data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryDag {
    pub names: Vec<String>,
    /// Parents of each node; the graph must be acyclic.
    pub parents: Vec<Vec<usize>>,
    /// `P(node = 1 | parents)`, indexed by the parents' bits read as a
    /// binary number, first parent most significant.
    pub cpt: Vec<Vec<f64>>,
}

impl BinaryDag {
    pub fn new(names: Vec<String>, parents: Vec<Vec<usize>>, cpt: Vec<Vec<f64>>) -> Result<Self> {
        let n = names.len();
        if parents.len() != n || cpt.len() != n {
            return Err(Error::InvalidConfig("names, parents and cpt lengths differ".into()));
        }
        for (v, (ps, probs)) in parents.iter().zip(&cpt).enumerate() {
            if ps.iter().any(|&p| p >= n || p == v) {
                return Err(Error::InvalidConfig(format!("bad parent list for node {v}")));
            }
            if probs.len() != 1 << ps.len() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidConfig(format!("bad conditional table for node {v}")));
            }
        }
        let dag = Self { names, parents, cpt };
        if dag.topological_order().is_none() {
            return Err(Error::InvalidConfig("graph has a cycle".into()));
        }
        Ok(dag)
    }

    fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.names.len();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let next = (0..n).find(|&v| !placed[v] && self.parents[v].iter().all(|&p| placed[p]))?;
            placed[next] = true;
            order.push(next);
        }
        Some(order)
    }

    /// `A -> B -> C <- D` with every table entry 0.2 or 0.8.
    pub fn collider_example() -> Self {
        Self::new(
            ["A", "B", "C", "D"].map(String::from).to_vec(),
            vec![vec![], vec![0], vec![1, 3], vec![]],
            vec![vec![0.2], vec![0.2, 0.8], vec![0.2, 0.8, 0.8, 0.8], vec![0.2]],
        )
        .expect("valid network")
    }

    /// Random network on `n` nodes: each forward edge present with
    /// probability 0.4 (at most three parents), roots fire with probability
    /// 0.2 or 0.8, and children follow a noisy OR of their parents
    /// (0.2 when all parents are off, 0.8 otherwise).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let names = (0..n).map(|i| format!("X{i}")).collect();
        let mut parents = Vec::with_capacity(n);
        let mut cpt = Vec::with_capacity(n);
        for v in 0..n {
            let ps: Vec<usize> = (0..v).filter(|_| rng.random_bool(0.4)).take(3).collect();
            let probs = if ps.is_empty() {
                vec![if rng.random_bool(0.5) { 0.2 } else { 0.8 }]
            } else {
                (0..1usize << ps.len())
                    .map(|cfg| if cfg == 0 { 0.2 } else { 0.8 })
                    .collect()
            };
            parents.push(ps);
            cpt.push(probs);
        }
        Self::new(names, parents, cpt).expect("valid network")
    }

    /// Parents, children and the children's other parents.
    pub fn markov_blanket(&self, node: usize) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = self.parents[node].iter().copied().collect();
        for (child, ps) in self.parents.iter().enumerate() {
            if ps.contains(&node) {
                out.insert(child);
                out.extend(ps.iter().copied().filter(|&p| p != node));
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> SampleTable {
        let n = self.names.len();
        let mut columns = vec![Vec::with_capacity(rows); n];
        let order = self.topological_order().expect("checked on construction");
        let mut bits = vec![0u32; n];
        for _ in 0..rows {
            for &v in &order {
                let idx = self.parents[v]
                    .iter()
                    .fold(0usize, |acc, &p| (acc << 1) | bits[p] as usize);
                let u: f64 = rng.random();
                bits[v] = u32::from(u < self.cpt[v][idx]);
                columns[v].push(bits[v]);
            }
        }
        let mut t = SampleTable::from_columns_unchecked(self.names.clone(), columns);
        // declared arity, even if a value never showed up
        t.arities = vec![2; n];
        t
    }
}
