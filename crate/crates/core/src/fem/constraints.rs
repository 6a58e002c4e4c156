//! Constraint elimination.
//!
//! Dirichlet dofs are removed, periodic slaves are merged into their root
//! master, and each mean-zero block pins one dof to zero and shifts the
//! expanded solution afterwards. Pinning is exact whenever constants on the
//! block are in the operator kernel, which is the case for every periodic
//! cell problem in this crate.

use std::collections::HashMap;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Weighted mean-zero condition `Σ w_i x_i = 0` over a dof block.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanZero {
    pub dofs: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    pub dirichlet: Vec<(usize, f64)>,
    /// `(slave, master)` pairs.
    pub periodic: Vec<(usize, usize)>,
    pub mean_zero: Vec<MeanZero>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clamp(dofs: impl IntoIterator<Item = usize>) -> Self {
        Self { dirichlet: dofs.into_iter().map(|d| (d, 0.0)).collect(), ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Free(usize),
    Fixed(f64),
}

/// Map between the full dof space and the reduced (free) one.
#[derive(Clone, Debug)]
pub struct DofMap {
    slots: Vec<Slot>,
    n_free: usize,
    /// Full dofs contributing to each free dof (root first, then slaves).
    sources: Vec<Vec<usize>>,
    mean_zero: Vec<MeanZero>,
    has_inhomogeneous: bool,
}

impl DofMap {
    pub fn new(n_full: usize, cs: &ConstraintSet) -> Result<Self> {
        let mut fixed: HashMap<usize, f64> = HashMap::new();
        for &(d, v) in &cs.dirichlet {
            if d >= n_full {
                return Err(Error::Constraint(format!("Dirichlet dof {d} out of range")));
            }
            if let Some(&old) = fixed.get(&d) {
                if old != v {
                    return Err(Error::Constraint(format!("dof {d} has conflicting Dirichlet values {old} and {v}")));
                }
            }
            fixed.insert(d, v);
        }
        let mut master: HashMap<usize, usize> = HashMap::new();
        for &(s, m) in &cs.periodic {
            if s >= n_full || m >= n_full {
                return Err(Error::Constraint(format!("periodic pair ({s}, {m}) out of range")));
            }
            if s == m {
                return Err(Error::Constraint(format!("dof {s} is its own periodic master")));
            }
            if fixed.contains_key(&s) {
                return Err(Error::Constraint(format!("dof {s} is both Dirichlet and periodic slave")));
            }
            if let Some(&old) = master.get(&s) {
                if old != m {
                    return Err(Error::Constraint(format!("dof {s} has two periodic masters")));
                }
            }
            master.insert(s, m);
        }
        let root = |mut d: usize| -> Result<usize> {
            let mut steps = 0;
            while let Some(&m) = master.get(&d) {
                d = m;
                steps += 1;
                if steps > master.len() {
                    return Err(Error::Constraint("periodic constraint graph has a cycle".into()));
                }
            }
            Ok(d)
        };

        let mut pinned = Vec::new();
        for block in &cs.mean_zero {
            if block.dofs.len() != block.weights.len() || block.dofs.is_empty() {
                return Err(Error::Constraint("mean-zero block needs one weight per dof".into()));
            }
            let mut pin = None;
            for &d in &block.dofs {
                if d >= n_full {
                    return Err(Error::Constraint(format!("mean-zero dof {d} out of range")));
                }
                if fixed.contains_key(&d) {
                    return Err(Error::Constraint(format!("dof {d} is both Dirichlet and mean-zero")));
                }
                if pin.is_none() && !master.contains_key(&d) {
                    pin = Some(d);
                }
            }
            let pin = pin.ok_or_else(|| Error::Constraint("mean-zero block has no unconstrained dof".into()))?;
            pinned.push(pin);
        }

        let mut slots = vec![Slot::Fixed(0.0); n_full];
        let mut n_free = 0;
        let mut sources: Vec<Vec<usize>> = Vec::new();
        for d in 0..n_full {
            if master.contains_key(&d) {
                continue;
            }
            if let Some(&v) = fixed.get(&d) {
                slots[d] = Slot::Fixed(v);
            } else if pinned.contains(&d) {
                slots[d] = Slot::Fixed(0.0);
            } else {
                slots[d] = Slot::Free(n_free);
                sources.push(vec![d]);
                n_free += 1;
            }
        }
        for d in 0..n_full {
            if master.contains_key(&d) {
                let r = root(d)?;
                slots[d] = slots[r];
                if let Slot::Free(i) = slots[r] {
                    sources[i].push(d);
                }
            }
        }
        let has_inhomogeneous = slots.iter().any(|s| matches!(s, Slot::Fixed(v) if *v != 0.0));
        Ok(Self { slots, n_free, sources, mean_zero: cs.mean_zero.clone(), has_inhomogeneous })
    }

    /// Map without constraints.
    pub fn identity(n: usize) -> Self {
        Self {
            slots: (0..n).map(Slot::Free).collect(),
            n_free: n,
            sources: (0..n).map(|d| vec![d]).collect(),
            mean_zero: Vec::new(),
            has_inhomogeneous: false,
        }
    }

    pub fn n_full(&self) -> usize {
        self.slots.len()
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Reduced index of a full dof, if free.
    pub fn free_index(&self, d: usize) -> Option<usize> {
        match self.slots[d] {
            Slot::Free(i) => Some(i),
            Slot::Fixed(_) => None,
        }
    }

    /// Full dof values implied by the constraints with all free dofs zero.
    pub fn fixed_values(&self) -> Vec<f64> {
        self.slots.iter().map(|s| if let Slot::Fixed(v) = s { *v } else { 0.0 }).collect()
    }

    pub fn has_inhomogeneous(&self) -> bool {
        self.has_inhomogeneous
    }

    /// `Rᵀ A R` where `R` maps reduced to full vectors.
    pub fn reduce_matrix(&self, a: &CsrMatrix) -> CsrMatrix {
        assert_eq!(a.nrows, self.n_full());
        self.reduce(a, Some(self))
    }

    /// `A R` (columns reduced only).
    pub fn reduce_columns(&self, a: &CsrMatrix) -> CsrMatrix {
        assert_eq!(a.ncols, self.n_full());
        self.reduce(a, None)
    }

    fn reduce(&self, a: &CsrMatrix, rows: Option<&DofMap>) -> CsrMatrix {
        let nrows = rows.map_or(a.nrows, |m| m.n_free);
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            acc.clear();
            let mut push_row = |full: usize| {
                for k in a.indptr[full]..a.indptr[full + 1] {
                    if let Slot::Free(c) = self.slots[a.indices[k]] {
                        acc.push((c, a.values[k]));
                    }
                }
            };
            match rows {
                Some(m) => m.sources[r].iter().for_each(|&f| push_row(f)),
                None => push_row(r),
            }
            acc.sort_unstable_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(c, v) in acc.iter() {
                if c == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows, ncols: self.n_free, indptr, indices, values }
    }

    /// `Rᵀ f`.
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n_full());
        self.sources.iter().map(|src| src.iter().map(|&d| f[d]).sum()).collect()
    }

    /// `Rᵀ (f − A u_fixed)`.
    pub fn reduce_rhs(&self, a: &CsrMatrix, f: &[f64]) -> Vec<f64> {
        if !self.has_inhomogeneous {
            return self.restrict(f);
        }
        let au = a.mul_vec(&self.fixed_values());
        let g: Vec<f64> = f.iter().zip(&au).map(|(x, y)| x - y).collect();
        self.restrict(&g)
    }

    /// Full vector from reduced values, with mean-zero shifts applied.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_free);
        let mut out: Vec<f64> = self
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Free(i) => x[i],
                Slot::Fixed(v) => v,
            })
            .collect();
        for block in &self.mean_zero {
            let wsum: f64 = block.weights.iter().sum();
            let mean: f64 = block.dofs.iter().zip(&block.weights).map(|(&d, w)| w * out[d]).sum::<f64>() / wsum;
            for &d in &block.dofs {
                out[d] -= mean;
            }
        }
        out
    }

    /// Reduced values of a full vector that satisfies the constraints.
    pub fn compress(&self, full: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_free];
        for (d, s) in self.slots.iter().enumerate() {
            if let Slot::Free(i) = *s {
                if self.sources[i][0] == d {
                    x[i] = full[d];
                }
            }
        }
        x
    }
}
