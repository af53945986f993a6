//! Loader and runner for the JSON fixtures in `tests/fixtures/`.
//!
//! Each fixture names its oracle. The runner recomputes every expected
//! value with that oracle, checks the frozen value against it, then checks
//! the library against the oracle within the fixture tolerance.

use std::fmt;
use std::path::Path;

use serde_json::Value;

use iccbf::{
    validate, AlphaVector, BarrierCascade, BoxBounds, SystemModel, ValidationConfig, Verdict,
};

use super::{di_r0_grid_min, disk_barrier, Di};

#[derive(Debug)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:<20} {}", self.name, self.detail)
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

fn vecf(v: &Value) -> Vec<f64> {
    v.as_array().expect("array").iter().map(f).collect()
}

fn di_from(v: &Value) -> Di {
    Di {
        dt: f(&v["dt"]),
        u_max: f(&v["u_max"]),
        wall: f(&v["wall"]),
    }
}

fn di_model(v: &Value) -> SystemModel<f64> {
    let di = di_from(v);
    let m = SystemModel::double_integrator(di.dt, di.u_max, di.wall).unwrap();
    match v.get("state_box") {
        Some(b) => {
            let axes: Vec<(f64, f64)> = b
                .as_array()
                .unwrap()
                .iter()
                .map(|a| (f(&a[0]), f(&a[1])))
                .collect();
            m.with_state_box(BoxBounds::new(axes).unwrap()).unwrap()
        }
        None => m,
    }
}

struct Check {
    expected: f64,
    oracle: f64,
    actual: f64,
}

fn judge(name: &str, tol: f64, checks: &[Check]) -> Outcome {
    let mut failures = Vec::new();
    for (i, c) in checks.iter().enumerate() {
        // frozen value must agree with its oracle to rounding
        if (c.expected - c.oracle).abs() > 1e-12 {
            failures.push(format!(
                "case {i}: frozen {} != oracle {}",
                c.expected, c.oracle
            ));
        }
        let err = (c.actual - c.oracle).abs();
        if err.is_nan() || err > tol {
            failures.push(format!(
                "case {i}: expected {}, actual {}, tolerance {tol}",
                c.oracle, c.actual
            ));
        }
    }
    Outcome {
        name: name.to_string(),
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} case(s) within {tol}", checks.len())
        } else {
            failures.join("; ")
        },
    }
}

pub fn run_fixture(fx: &Value) -> Outcome {
    let name = fx["name"].as_str().unwrap();
    let tol = f(&fx["tolerance"]);
    let oracle = fx["oracle"].as_str().unwrap();
    let kind = fx["kind"].as_str().unwrap();
    if fx["derivation"].as_str().is_none_or(str::is_empty) {
        return Outcome {
            name: name.to_string(),
            passed: false,
            detail: "missing derivation note".into(),
        };
    }

    if kind == "unicycle_h" {
        let s = &fx["system"];
        let c = vecf(&s["obstacle_center"]);
        let center = [c[0], c[1]];
        let r = f(&s["obstacle_radius"]);
        let m = SystemModel::unicycle(f(&s["dt"]), f(&s["v_max"]), f(&s["omega_max"]), center, r)
            .unwrap();
        assert_eq!(oracle, "disk_barrier");
        let checks: Vec<Check> = fx["cases"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| {
                let x = vecf(&c["x"]);
                Check {
                    expected: f(&c["expected"]),
                    oracle: disk_barrier(center, r, &x),
                    actual: m.barrier(&x),
                }
            })
            .collect();
        return judge(name, tol, &checks);
    }

    let di = di_from(&fx["system"]);
    let model = di_model(&fx["system"]);
    let gammas = vecf(&fx["gammas"]);
    let alpha = AlphaVector::linear(&gammas).unwrap();

    if kind == "validate" {
        assert_eq!(oracle, "di_r0_grid_min");
        let b = &fx["system"]["state_box"];
        let bx = [[f(&b[0][0]), f(&b[0][1])], [f(&b[1][0]), f(&b[1][1])]];
        let res = fx["state_res"].as_u64().unwrap() as usize;
        let (zeta, worst) = di_r0_grid_min(&di, gammas[0], bx, res).unwrap();
        let cfg = ValidationConfig::new(res, fx["input_res"].as_u64().unwrap() as usize);
        let rep = validate(&model, &alpha, &cfg).unwrap();
        let mut out = judge(
            name,
            tol,
            &[Check {
                expected: f(&fx["expected_zeta"]),
                oracle: zeta,
                actual: rep.zeta_star.unwrap(),
            }],
        );
        let verdict = if zeta >= 0.0 {
            Verdict::Certified
        } else {
            Verdict::Refuted
        };
        let mut extra = Vec::new();
        if format!("{:?}", rep.verdict) != fx["expected_verdict"].as_str().unwrap()
            || rep.verdict != verdict
        {
            extra.push(format!("verdict {:?}, oracle {verdict:?}", rep.verdict));
        }
        if rep.worst_state.as_deref() != Some(&worst[..]) || vecf(&fx["expected_worst"]) != worst {
            extra.push(format!("worst {:?}, oracle {worst:?}", rep.worst_state));
        }
        let ce = vecf(&fx["counterexample"]);
        if di.cbf_condition(gammas[0], &ce) >= 0.0 || !rep.counterexamples.iter().any(|x| x == &ce)
        {
            extra.push(format!("counterexample {ce:?} not reported"));
        }
        if !extra.is_empty() {
            out.passed = false;
            out.detail = format!("{}; {}", out.detail, extra.join("; "));
        }
        return out;
    }

    let cascade = BarrierCascade::new(model, alpha, 11).unwrap();
    let checks: Vec<Check> = fx["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let x = vecf(&c["x"]);
            let u = c.get("u").map(vecf);
            let (o, actual) = match (kind, oracle) {
                ("eval_b", "di_b1") => (di.b1(gammas[0], &x), cascade.eval_b(&x, 1).unwrap()),
                ("psi", "di_cbf_condition") => (
                    di.cbf_condition(gammas[0], &x),
                    cascade.eval_psi(&x, u.as_ref().unwrap()).unwrap(),
                ),
                ("delta_b", "di_delta_b1") => {
                    let u = u.unwrap();
                    (
                        di.delta_b1(gammas[0], &x, u[0]),
                        cascade.delta_b(&x, &u, 1).unwrap(),
                    )
                }
                ("psi", "di_psi_r1") => {
                    let u = u.unwrap();
                    (
                        di.psi_r1(gammas[0], gammas[1], &x, u[0]),
                        cascade.eval_psi(&x, &u).unwrap(),
                    )
                }
                other => panic!("unknown fixture kind/oracle {other:?}"),
            };
            Check {
                expected: f(&c["expected"]),
                oracle: o,
                actual,
            }
        })
        .collect();
    judge(name, tol, &checks)
}

/// Runs every fixture file in `dir`, sorted by file name.
pub fn run_fixtures(dir: &Path) -> Vec<Outcome> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let fx: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
            run_fixture(&fx)
        })
        .collect()
}

pub fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}
