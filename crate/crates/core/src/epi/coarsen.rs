use super::scenario::Scenario;
use crate::error::{Error, Result};

/// Surjective, monotone assignment of fine age groups to contiguous brackets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgeBracketMap {
    assignment: Vec<usize>,
    n_coarse: usize,
}

impl AgeBracketMap {
    /// `assignment[i]` is the bracket of fine group `i`; brackets must be
    /// contiguous, start at 0 and never skip an index.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let first = *assignment.first().ok_or(Error::Empty("age bracket map"))?;
        if first != 0 {
            return Err(Error::invalid("age bracket map must start at bracket 0"));
        }
        for w in assignment.windows(2) {
            if w[1] != w[0] && w[1] != w[0] + 1 {
                return Err(Error::invalid(format!("age brackets must be contiguous: {} follows {}", w[1], w[0])));
            }
        }
        let n_coarse = assignment.last().map_or(0, |l| l + 1);
        Ok(AgeBracketMap { assignment, n_coarse })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new((0..n).collect())
    }

    /// `n_fine` groups split into `n_coarse` brackets of near-equal size, larger brackets first.
    pub fn even(n_fine: usize, n_coarse: usize) -> Result<Self> {
        if n_coarse == 0 || n_coarse > n_fine {
            return Err(Error::invalid(format!("cannot split {n_fine} groups into {n_coarse} brackets")));
        }
        let (base, extra) = (n_fine / n_coarse, n_fine % n_coarse);
        let mut a = Vec::with_capacity(n_fine);
        for b in 0..n_coarse {
            a.extend(std::iter::repeat_n(b, base + usize::from(b < extra)));
        }
        Self::new(a)
    }

    /// Single-year ages 0..=84 into 18 brackets: sixteen of five years
    /// (0-4 .. 75-79), then 80-83 and 84.
    pub fn standard_85_to_18() -> Self {
        let mut a: Vec<usize> = (0..80).map(|age| age / 5).collect();
        a.extend([16; 4]);
        a.push(17);
        Self::new(a).expect("static map is valid")
    }

    pub fn n_fine(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn bracket_of(&self, fine: usize) -> usize {
        self.assignment[fine]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
}

/// Population-weighted row aggregation and column summation of a contact matrix.
///
/// `N_a = Σ_{i∈a} N_i` and `M_lo[a,b] = Σ_{i∈a} (N_i / N_a) Σ_{j∈b} M_hi[i,j]`.
pub fn coarsen(contacts: &[f64], populations: &[u64], map: &AgeBracketMap) -> Result<(Vec<f64>, Vec<u64>)> {
    let n = populations.len();
    if map.n_fine() != n {
        return Err(Error::LengthMismatch { op: "coarsen map", expected: n, actual: map.n_fine() });
    }
    if contacts.len() != n * n {
        return Err(Error::LengthMismatch { op: "coarsen contacts", expected: n * n, actual: contacts.len() });
    }
    let nc = map.n_coarse();
    let mut pops = vec![0u64; nc];
    for (i, &p) in populations.iter().enumerate() {
        pops[map.bracket_of(i)] += p;
    }
    if let Some(b) = pops.iter().position(|&p| p == 0) {
        return Err(Error::invalid(format!("coarse bracket {b} has zero population")));
    }
    let mut m = vec![0.0; nc * nc];
    for i in 0..n {
        let a = map.bracket_of(i);
        let w = populations[i] as f64 / pops[a] as f64;
        for j in 0..n {
            m[a * nc + map.bracket_of(j)] += w * contacts[i * n + j];
        }
    }
    Ok((m, pops))
}

impl Scenario {
    /// The same epidemic on coarse brackets: contacts and populations via
    /// [`coarsen`], initial infections summed, `R_0` kept.
    pub fn coarsened(&self, map: &AgeBracketMap) -> Result<Scenario> {
        self.validate()?;
        let (contacts, populations) = coarsen(&self.contacts, &self.populations, map)?;
        let mut initial = vec![0u64; map.n_coarse()];
        for (i, &v) in self.initial_infected.iter().enumerate() {
            initial[map.bracket_of(i)] += v;
        }
        Ok(Scenario { contacts, populations, initial_infected: initial, ..self.clone() })
    }
}
