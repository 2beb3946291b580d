use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use super::sim::{SensorConfig, TagObservation, MAX_RANGE};
use super::LocalizationError;
use crate::schema::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Converged once an accepted step is shorter than this, in meters.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionFix {
    pub tag_id: String,
    pub position: Vec3,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

fn from_na(v: &Vector3<f64>) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

struct Problem {
    anchors: Vec<Vector3<f64>>,
    ranges: Vec<f64>,
}

impl Problem {
    fn cost(&self, p: &Vector3<f64>) -> f64 {
        self.anchors.iter().zip(&self.ranges).map(|(a, r)| ((p - a).norm() - r).powi(2)).sum()
    }

    /// Normal matrix JᵀJ and gradient Jᵀr at `p`.
    fn linearize(&self, p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (a, r) in self.anchors.iter().zip(&self.ranges) {
            let d = p - a;
            let n = d.norm();
            if n < 1e-12 {
                // derivative undefined on top of an anchor; that row drops out
                continue;
            }
            let row = d / n;
            jtj += row * row.transpose();
            jtr += row * (n - r);
        }
        (jtj, jtr)
    }
}

fn solve3(m: &Matrix3<f64>, rhs: &Vector3<f64>) -> Option<Vector3<f64>> {
    let step = m.cholesky()?.solve(rhs);
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Condition number of JᵀJ for the given sensors linearized at `at`.
/// Infinite when the sensors cannot pin down a 3D position there.
pub fn geometry_condition(sensors: &[SensorConfig], at: Vec3) -> f64 {
    let problem = Problem {
        anchors: sensors.iter().map(|s| to_na(s.position)).collect(),
        ranges: vec![0.0; sensors.len()],
    };
    let (jtj, _) = problem.linearize(&to_na(at));
    let sv = jtj.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Sensor centroid, pushed 1 m off the sensor plane when the sensors are
/// coplanar.
///
/// Ranges alone cannot tell a point from its mirror image across that plane,
/// and the centroid itself sits on it where the Jacobian loses a dimension.
/// Sensors are ceiling-mounted, so the offset goes toward -z.
pub fn default_initial_guess(sensors: &[SensorConfig]) -> Vec3 {
    if sensors.is_empty() {
        return Vec3::ZERO;
    }
    let centroid = sensors.iter().map(|s| s.position).sum::<Vec3>() / sensors.len() as f64;
    let mut scatter = Matrix3::zeros();
    for s in sensors {
        let d = to_na(s.position - centroid);
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let (imin, lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc });
    let lmax = eig.eigenvalues.max();
    if lmax > 0.0 && lmin <= 1e-9 * lmax {
        let mut normal = from_na(&eig.eigenvectors.column(imin).into_owned());
        if normal.z > 0.0 {
            normal = -normal;
        }
        return centroid + normal;
    }
    centroid
}

/// Closed-form estimate from differencing the squared range equations
/// against their mean. Exact for noiseless ranges when the sensors are not
/// coplanar; `None` when they are.
fn linear_estimate(problem: &Problem) -> Option<Vector3<f64>> {
    let n = problem.anchors.len() as f64;
    let mean_a = problem.anchors.iter().sum::<Vector3<f64>>() / n;
    let mean_sq = problem.anchors.iter().map(|a| a.norm_squared()).sum::<f64>() / n;
    let mean_r2 = problem.ranges.iter().map(|r| r * r).sum::<f64>() / n;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (a, r) in problem.anchors.iter().zip(&problem.ranges) {
        let row = 2.0 * (a - mean_a);
        let b = (a.norm_squared() - mean_sq) - (r * r - mean_r2);
        ata += row * row.transpose();
        atb += row * b;
    }
    let sv = ata.singular_values();
    if !(sv.min() > 1e-10 * sv.max()) {
        return None;
    }
    solve3(&ata, &atb)
}

/// Least-squares tag position from range observations.
///
/// Minimizes Σ(|p - s_i| - r_i)² with Gauss–Newton. A step that would raise
/// the cost, or a singular normal matrix, switches to a Levenberg-damped step,
/// so accepted iterates never get worse. Returns the best iterate with
/// `converged == false` if `max_iters` runs out first.
///
/// Besides `initial_guess`, the solver also starts from the linearized
/// closed-form estimate when the sensors are not coplanar, and keeps the run
/// with the lower final cost.
pub fn solve_position(
    observations: &[TagObservation],
    sensors: &[SensorConfig],
    initial_guess: Vec3,
    opts: &SolverOptions,
) -> Result<PositionFix, LocalizationError> {
    let problem = build_problem(observations, sensors)?;
    let mut best = gauss_newton(&problem, to_na(initial_guess), opts, None);
    if let Some(start) = linear_estimate(&problem) {
        let alt = gauss_newton(&problem, start, opts, None);
        if alt.cost < best.cost {
            best = alt;
        }
    }
    Ok(best.into_fix(&problem, observations))
}

struct Run {
    p: Vector3<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
}

impl Run {
    fn into_fix(self, problem: &Problem, observations: &[TagObservation]) -> PositionFix {
        PositionFix {
            tag_id: observations[0].tag_id.clone(),
            position: from_na(&self.p),
            rms_residual: (self.cost / problem.ranges.len() as f64).sqrt(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

fn build_problem(observations: &[TagObservation], sensors: &[SensorConfig]) -> Result<Problem, LocalizationError> {
    let by_id: HashMap<&str, &SensorConfig> = sensors.iter().map(|s| (s.id.as_str(), s)).collect();
    // last observation wins if a sensor reports twice
    let mut per_sensor: HashMap<&str, f64> = HashMap::new();
    for o in observations {
        if !(o.range > 0.0 && o.range < MAX_RANGE) {
            return Err(LocalizationError::InvalidRange { sensor_id: o.sensor_id.clone(), range: o.range });
        }
        if !by_id.contains_key(o.sensor_id.as_str()) {
            return Err(LocalizationError::UnknownSensor(o.sensor_id.clone()));
        }
        per_sensor.insert(&o.sensor_id, o.range);
    }
    if per_sensor.len() < 3 {
        return Err(LocalizationError::InsufficientObservations { distinct_sensors: per_sensor.len() });
    }
    let mut ids: Vec<&str> = per_sensor.keys().copied().collect();
    ids.sort_unstable();
    Ok(Problem {
        anchors: ids.iter().map(|id| to_na(by_id[id].position)).collect(),
        ranges: ids.iter().map(|id| per_sensor[id]).collect(),
    })
}

fn gauss_newton(
    problem: &Problem,
    start: Vector3<f64>,
    opts: &SolverOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Run {
    let mut p = start;
    let mut cost = problem.cost(&p);
    if let Some(t) = trace.as_deref_mut() {
        t.push(cost);
    }
    let mut lambda = 0.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let (jtj, jtr) = problem.linearize(&p);
        let mut accepted = None;

        if let Some(step) = solve3(&jtj, &-jtr) {
            let next = p + step;
            let c = problem.cost(&next);
            if step.norm() < opts.tol {
                if c <= cost {
                    p = next;
                    cost = c;
                }
                converged = true;
            } else if c <= cost {
                accepted = Some((next, c, step.norm()));
                lambda = 0.0;
            }
        }
        if converged {
            break;
        }

        if accepted.is_none() {
            let scale = jtj.diagonal().max().max(1e-12);
            lambda = if lambda == 0.0 { 1e-3 * scale } else { lambda };
            for _ in 0..40 {
                let damped = jtj + Matrix3::identity() * lambda;
                if let Some(step) = solve3(&damped, &-jtr) {
                    let next = p + step;
                    let c = problem.cost(&next);
                    if c <= cost {
                        accepted = Some((next, c, step.norm()));
                        lambda /= 10.0;
                        break;
                    }
                    if step.norm() < opts.tol {
                        break;
                    }
                }
                lambda *= 10.0;
            }
        }

        match accepted {
            Some((next, c, step_norm)) => {
                p = next;
                cost = c;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(cost);
                }
                if step_norm < opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // no descent direction left at this precision: a stationary point
                converged = cost.is_finite();
                break;
            }
        }
    }

    Run { p, cost, iterations, converged }
}
