//! Finite Markov-chain oracles for tests: Erlang (or exponential) service is
//! expanded into phases so that every transform becomes a linear solve.

use crate::model::service::ln_factorial;

/// Where a transition goes.
#[derive(Debug, Clone, Copy)]
pub enum Target {
    Level(i64),
    Exit(usize),
}

pub struct Chain {
    pub lo: i64,
    pub hi: i64,
    pub phases: usize,
    /// off-diagonal rates between transient states and into exit tags
    moves: Vec<Vec<(usize, f64)>>,
    exits: Vec<Vec<(usize, f64)>>,
    out: Vec<f64>,
    pub tags: usize,
}

/// Erlang(`phases`, `nu`) service, batch pmf `batch[i] = P[kappa = i]`,
/// geometric(`lambda`) departure batches. The closures map a level and a
/// jump to the resulting target; `serving(level)` says whether the server
/// is busy at that level.
pub struct Spec<'a> {
    pub mu: f64,
    pub batch: &'a [f64],
    pub phases: usize,
    pub nu: f64,
    pub lambda: f64,
    pub lo: i64,
    pub hi: i64,
    pub tags: usize,
    pub up: &'a dyn Fn(i64, usize) -> Target,
    pub down: &'a dyn Fn(i64, usize) -> Target,
    pub serving: &'a dyn Fn(i64) -> bool,
    /// A level whose completions use their own departure pmf
    /// (`pmf[d-1] = P[size = d]`).
    pub special: Option<(i64, &'a [f64])>,
}

impl Chain {
    pub fn build(sp: &Spec<'_>) -> Chain {
        let nlev = (sp.hi - sp.lo + 1) as usize;
        let n = nlev * sp.phases;
        let mut moves = vec![Vec::new(); n];
        let mut exits = vec![Vec::new(); n];
        let mut out = vec![0.0; n];
        let idx = |lev: i64, ph: usize| (lev - sp.lo) as usize * sp.phases + ph;
        // departure sizes with geometric weights, truncated far in the tail
        let mut dep = Vec::new();
        let mut p = 1.0 - sp.lambda;
        let mut d = 1;
        while p > 1e-18 || d == 1 {
            dep.push((d, p));
            if sp.lambda == 0.0 {
                break;
            }
            p *= sp.lambda;
            d += 1;
        }
        let mut push = |from: usize, tgt: Target, rate: f64, ph: usize| {
            out[from] += rate;
            match tgt {
                Target::Level(l) => moves[from].push((idx(l, ph), rate)),
                Target::Exit(t) => exits[from].push((t, rate)),
            }
        };
        for lev in sp.lo..=sp.hi {
            for ph in 0..sp.phases {
                let from = idx(lev, ph);
                for (i, a) in sp.batch.iter().enumerate() {
                    if *a > 0.0 {
                        push(from, (sp.up)(lev, i), sp.mu * a, ph);
                    }
                }
                if (sp.serving)(lev) {
                    if ph + 1 < sp.phases {
                        push(from, Target::Level(lev), sp.nu, ph + 1);
                    } else if let Some((_, pmf)) = sp.special.filter(|(l, _)| *l == lev) {
                        for (i, w) in pmf.iter().enumerate() {
                            if *w > 0.0 {
                                push(from, (sp.down)(lev, i + 1), sp.nu * w, 0);
                            }
                        }
                    } else {
                        for &(d, w) in &dep {
                            push(from, (sp.down)(lev, d), sp.nu * w, 0);
                        }
                    }
                }
            }
        }
        Chain {
            lo: sp.lo,
            hi: sp.hi,
            phases: sp.phases,
            moves,
            exits,
            out,
            tags: sp.tags,
        }
    }

    pub fn index(&self, lev: i64, ph: usize) -> usize {
        (lev - self.lo) as usize * self.phases + ph
    }

    fn matrix(&self, s: f64) -> Vec<Vec<f64>> {
        let n = self.out.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = s + self.out[i];
            for &(j, r) in &self.moves[i] {
                m[i][j] -= r;
            }
        }
        m
    }

    /// `E_state[e^{-s T}; exit through tag]`, rows indexed by state.
    pub fn exit_lt(&self, s: f64) -> Vec<Vec<f64>> {
        let n = self.out.len();
        let mut rhs = vec![vec![0.0; self.tags]; n];
        for i in 0..n {
            for &(t, r) in &self.exits[i] {
                rhs[i][t] += r;
            }
        }
        solve(self.matrix(s), rhs)
    }

    /// Stationary law of a chain without exits, per state.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.out.len();
        let m = self.matrix(0.0);
        let mut t = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                t[j][i] = m[i][j];
            }
        }
        // unreachable states get an identity row so they carry no mass
        for i in 0..n {
            if self.out[i] == 0.0 && t[i].iter().all(|v| *v == 0.0) {
                t[i][i] = 1.0;
            }
        }
        let mut rhs = vec![vec![0.0]; n];
        t[n - 1] = vec![1.0; n];
        rhs[n - 1][0] = 1.0;
        solve(t, rhs).into_iter().map(|r| r[0]).collect()
    }

    /// Mean time to absorption from each state.
    pub fn mean_exit_time(&self) -> Vec<f64> {
        let n = self.out.len();
        solve(self.matrix(0.0), vec![vec![1.0]; n]).into_iter().map(|r| r[0]).collect()
    }

    /// `s int e^{-st} E_state[w(level at t); no exit before t] dt`.
    pub fn occupancy(&self, s: f64, w: &dyn Fn(i64) -> f64) -> Vec<f64> {
        let n = self.out.len();
        let mut rhs = vec![vec![0.0; 1]; n];
        for lev in self.lo..=self.hi {
            for ph in 0..self.phases {
                rhs[self.index(lev, ph)][0] = s * w(lev);
            }
        }
        solve(self.matrix(s), rhs).into_iter().map(|r| r[0]).collect()
    }

    /// Mixes rows over the phase posterior of a service of age `x`.
    pub fn at_age(&self, rows: &[f64], lev: i64, nu: f64, x: f64) -> f64 {
        let post = phase_posterior(self.phases, nu, x);
        (0..self.phases).map(|ph| post[ph] * rows[self.index(lev, ph)]).sum()
    }
}

/// Posterior over completed phases of an Erlang service that has been in
/// progress for `x`: proportional to `(nu x)^j / j!`.
pub fn phase_posterior(phases: usize, nu: f64, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![0.0; phases];
        v[0] = 1.0;
        return v;
    }
    let lw: Vec<f64> = (0..phases).map(|j| j as f64 * (nu * x).ln() - ln_factorial(j)).collect();
    let mx = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|v| (v - mx).exp()).collect();
    let tot: f64 = w.iter().sum();
    w.into_iter().map(|v| v / tot).collect()
}

pub fn column(rows: &[Vec<f64>], t: usize) -> Vec<f64> {
    rows.iter().map(|r| r[t]).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b.first().map_or(0, |r| r.len());
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            for k in 0..m {
                b[row][k] -= f * b[col][k];
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    for row in (0..n).rev() {
        for k in 0..m {
            let mut acc = b[row][k];
            for j in row + 1..n {
                acc -= a[row][j] * x[j][k];
            }
            x[row][k] = acc / a[row][row];
        }
    }
    x
}
