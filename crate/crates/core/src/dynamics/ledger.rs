use std::collections::BTreeMap;

/// Which pair of ball types a local time belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairKind {
    /// Two spheres; ids are unordered.
    SphereSphere,
    /// Sphere id first, particle id second.
    SphereParticle,
}

impl PairKind {
    pub fn tag(self) -> &'static str {
        match self {
            PairKind::SphereSphere => "SS",
            PairKind::SphereParticle => "SP",
        }
    }
}

/// Accumulated collision local times per pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalTimeLedger {
    sphere_sphere: BTreeMap<(u64, u64), f64>,
    sphere_particle: BTreeMap<(u64, u64), f64>,
}

fn ordered(i: u64, j: u64) -> (u64, u64) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl LocalTimeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// `L_ij`, symmetric in its arguments; zero on the diagonal.
    pub fn sphere_pair(&self, i: u64, j: u64) -> f64 {
        if i == j {
            return 0.0;
        }
        self.sphere_sphere.get(&ordered(i, j)).copied().unwrap_or(0.0)
    }

    /// `l_ik` for sphere `i` and particle `k`.
    pub fn sphere_particle(&self, sphere: u64, particle: u64) -> f64 {
        self.sphere_particle
            .get(&(sphere, particle))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn get(&self, kind: PairKind, a: u64, b: u64) -> f64 {
        match kind {
            PairKind::SphereSphere => self.sphere_pair(a, b),
            PairKind::SphereParticle => self.sphere_particle(a, b),
        }
    }

    /// Adds a non-negative increment.
    pub fn credit(&mut self, kind: PairKind, a: u64, b: u64, amount: f64) {
        debug_assert!(amount >= 0.0);
        if amount <= 0.0 {
            return;
        }
        match kind {
            PairKind::SphereSphere => {
                debug_assert_ne!(a, b);
                *self.sphere_sphere.entry(ordered(a, b)).or_insert(0.0) += amount;
            }
            PairKind::SphereParticle => {
                *self.sphere_particle.entry((a, b)).or_insert(0.0) += amount;
            }
        }
    }

    /// Every stored entry in `(kind, a, b)` order.
    pub fn entries(&self) -> impl Iterator<Item = (PairKind, u64, u64, f64)> + '_ {
        self.sphere_sphere
            .iter()
            .map(|(&(a, b), &v)| (PairKind::SphereSphere, a, b, v))
            .chain(
                self.sphere_particle
                    .iter()
                    .map(|(&(a, b), &v)| (PairKind::SphereParticle, a, b, v)),
            )
    }

    pub fn len(&self) -> usize {
        self.sphere_sphere.len() + self.sphere_particle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total(&self) -> f64 {
        self.entries().map(|e| e.3).sum()
    }

    /// True when every entry of `self` is at least the matching entry of `earlier`.
    pub fn dominates(&self, earlier: &LocalTimeLedger) -> bool {
        earlier
            .entries()
            .all(|(k, a, b, v)| self.get(k, a, b) >= v)
    }
}
