//! Confining fields for a finite subsystem inside `B(0, R)` with a frozen
//! exterior configuration.
//!
//! Both fields are `2 log R` plus a radial ramp outside the ball, plus a bump
//! around each exterior ball in the boundary shell, plus the log of the shell
//! counts. They are constant (zero gradient) on their free regions.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::geometry::{norm2, BallKind, Container, GeometryError, PointSet, SimulationDomain, VolumeEstimate};

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3`, clamped to `[0, 1]`.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

#[inline]
pub fn smoothstep_prime(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        let w = t * (1.0 - t);
        30.0 * w * w
    }
}

#[inline]
pub fn smoothstep_second(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    }
}

/// Non-increasing bump: 1 for `t <= 0`, 0 for `t >= 1`.
#[inline]
pub fn bump(t: f64) -> f64 {
    1.0 - smoothstep(t)
}

#[inline]
pub fn bump_prime(t: f64) -> f64 {
    -smoothstep_prime(t)
}

/// Ramp with `ramp' = smoothstep`: 0 for `t <= 0`, `t - 1/2` for `t >= 1`.
#[inline]
pub fn ramp(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        t - 0.5
    } else {
        let t2 = t * t;
        t2 * t2 * (t * (t - 3.0) + 2.5)
    }
}

#[inline]
pub fn ramp_prime(t: f64) -> f64 {
    smoothstep(t)
}

/// Ramp argument beyond which `e^{-ramp}` is below `e^{-40}`.
const RAMP_CUTOFF: f64 = 40.5;

/// The pair of penalisation fields for a ball container.
#[derive(Clone, Debug)]
pub struct PenalisationField {
    dim: usize,
    radius: f64,
    sphere_radius: f64,
    depletion_radius: f64,
    /// Exterior spheres with `R <= |y| <= R + 2 r_s`.
    shell_spheres: PointSet,
    /// Exterior particles with `R <= |y| <= R + r_s + r_p`.
    shell_particles: PointSet,
    /// Exterior spheres with `R <= |y| <= R + r_s + r_p`.
    shell_spheres_near: PointSet,
    log_terms_sphere: f64,
    log_terms_particle: f64,
}

fn shell(points: &PointSet, lo: f64, hi: f64) -> PointSet {
    let mut out = PointSet::new(points.dim());
    for (id, p) in points.iter() {
        let r = norm2(p).sqrt();
        if lo <= r && r <= hi {
            out.push(id, p);
        }
    }
    out
}

fn log_count(n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64).ln()
    }
}

impl PenalisationField {
    /// Builds the fields for a ball container. The radius must be at least 1
    /// so that `2 log R >= 0`.
    pub fn new(dom: &SimulationDomain) -> Result<Self, GeometryError> {
        let (radius, exterior) = match dom.container() {
            Container::Ball { radius, exterior } => (*radius, exterior),
            _ => {
                return Err(GeometryError::InvalidDomain(
                    "penalisation requires ball container".into(),
                ))
            }
        };
        if radius < 1.0 {
            return Err(GeometryError::InvalidDomain(format!(
                "penalisation needs a ball radius of at least 1, got {radius}"
            )));
        }
        let rs = dom.sphere_radius();
        let ro = dom.depletion_radius();
        let shell_spheres = shell(&exterior.spheres, radius, radius + 2.0 * rs);
        let shell_particles = shell(&exterior.particles, radius, radius + ro);
        let shell_spheres_near = shell(&exterior.spheres, radius, radius + ro);
        let log_terms_sphere = log_count(shell_spheres.len()) + log_count(shell_particles.len());
        let log_terms_particle = log_count(shell_spheres_near.len());
        Ok(PenalisationField {
            dim: dom.dim(),
            radius,
            sphere_radius: rs,
            depletion_radius: ro,
            shell_spheres,
            shell_particles,
            shell_spheres_near,
            log_terms_sphere,
            log_terms_particle,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Radius beyond which `e^{-psi}` is negligible (below `R^{-2} e^{-40}`).
    pub fn support_radius(&self) -> f64 {
        self.radius + RAMP_CUTOFF / self.radius.powi(self.dim as i32 + 1)
    }

    fn ramp_scale(&self) -> f64 {
        self.radius.powi(self.dim as i32 + 1)
    }

    /// Exterior balls that enter the field of `kind`, with their exclusion radius.
    fn obstacles(&self, kind: BallKind) -> [(&PointSet, f64); 2] {
        match kind {
            BallKind::Sphere => [
                (&self.shell_spheres, 2.0 * self.sphere_radius),
                (&self.shell_particles, self.depletion_radius),
            ],
            BallKind::Particle => [
                (&self.shell_spheres_near, self.depletion_radius),
                (&self.shell_particles, 0.0),
            ],
        }
    }

    /// Membership in the free region of `kind`.
    pub fn is_free(&self, x: &[f64], kind: BallKind) -> bool {
        if norm2(x) >= self.radius * self.radius {
            return false;
        }
        for (set, c) in self.obstacles(kind) {
            if c == 0.0 {
                continue;
            }
            let c2 = c * c;
            for (_, y) in set.iter() {
                if dist2(x, y) < c2 {
                    return false;
                }
            }
        }
        true
    }

    /// Value of the field of `kind` at `x`.
    pub fn value(&self, x: &[f64], kind: BallKind) -> f64 {
        let r = norm2(x).sqrt();
        let mut v = 2.0 * self.radius.ln() + ramp(self.ramp_scale() * (r - self.radius));
        for (set, c) in self.obstacles(kind) {
            if c == 0.0 {
                continue;
            }
            let c2 = c * c;
            for (_, y) in set.iter() {
                v += bump(dist2(x, y) / c2);
            }
        }
        v + self.log_terms(kind)
    }

    fn log_terms(&self, kind: BallKind) -> f64 {
        match kind {
            BallKind::Sphere => self.log_terms_sphere,
            BallKind::Particle => self.log_terms_particle,
        }
    }

    /// Value of the field at `x`, writing its gradient into `grad`.
    pub fn value_and_grad(&self, x: &[f64], kind: BallKind, grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let n2 = norm2(x);
        let r = n2.sqrt();
        let a = self.ramp_scale();
        let t = a * (r - self.radius);
        let mut v = 2.0 * self.radius.ln() + ramp(t);
        let s = ramp_prime(t);
        if s != 0.0 {
            let f = s * a / r;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += f * xi;
            }
        }
        for (set, c) in self.obstacles(kind) {
            if c == 0.0 {
                continue;
            }
            let c2 = c * c;
            for (_, y) in set.iter() {
                let t = dist2(x, y) / c2;
                v += bump(t);
                let b = bump_prime(t);
                if b != 0.0 {
                    let f = 2.0 * b / c2;
                    for k in 0..x.len() {
                        grad[k] += f * (x[k] - y[k]);
                    }
                }
            }
        }
        v + self.log_terms(kind)
    }

    /// Monte Carlo estimate of the reference mass `int e^{-psi}` over the
    /// complement of the free region of `kind`.
    ///
    /// The part inside `B(0, R)` is sampled uniformly; the part outside is
    /// sampled along rays with an exponential radial law matched to the ramp.
    pub fn complement_mass<G: Rng + ?Sized>(&self, kind: BallKind, samples: usize, rng: &mut G) -> VolumeEstimate {
        let d = self.dim;
        let r0 = self.radius;
        let a = self.ramp_scale();
        let vd = crate::depletion::unit_ball_volume(d);
        let surface = d as f64 * vd;
        let has_inner = self.obstacles(kind).iter().any(|(s, c)| *c > 0.0 && !s.is_empty());
        let (n_in, n_out) = if has_inner {
            (samples / 2, samples - samples / 2)
        } else {
            (0, samples)
        };
        let mut x = vec![0.0; d];

        let mut inner = Vec::with_capacity(n_in);
        let ball = vd * r0.powi(d as i32);
        for _ in 0..n_in {
            random_direction(rng, &mut x);
            let r = r0 * rng.random::<f64>().powf(1.0 / d as f64);
            x.iter_mut().for_each(|v| *v *= r);
            inner.push(if self.is_free(&x, kind) {
                0.0
            } else {
                ball * (-self.value(&x, kind)).exp()
            });
        }

        let mut outer = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let tau: f64 = rng.sample(Exp1);
            let r = r0 + tau / a;
            random_direction(rng, &mut x);
            x.iter_mut().for_each(|v| *v *= r);
            let w = surface * r.powi(d as i32 - 1) / a * (tau - self.value(&x, kind)).exp();
            outer.push(w);
        }

        let part = |xs: &[f64]| {
            if xs.is_empty() {
                (0.0, 0.0)
            } else {
                let e = crate::stats::iid_estimate(xs);
                (e.mean, e.std_error)
            }
        };
        let (mi, si) = part(&inner);
        let (mo, so) = part(&outer);
        VolumeEstimate {
            value: mi + mo,
            std_error: si.hypot(so),
        }
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Uniform unit vector.
pub(crate) fn random_direction<G: Rng + ?Sized>(rng: &mut G, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = norm2(out).sqrt();
        if n > 1e-12 {
            out.iter_mut().for_each(|v| *v /= n);
            return;
        }
    }
}
