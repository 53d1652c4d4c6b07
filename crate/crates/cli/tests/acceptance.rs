//! The project's acceptance gate, one test per criterion. Each test prints a
//! single `criterion NN … PASS` line (visible with `--nocapture`); the
//! harness result line carries the same verdict either way.
//!
//! Criteria 1–6, 8, and 10 are numerical contracts on the stencil, curvature,
//! differentiation, and metrics machinery, with tolerances stated inline next
//! to their rationale. Criteria 7 and 9 run the shipped binary end to end and
//! take minutes each; run `cargo test --test acceptance c01` style filters to
//! pick single criteria.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use fdrecon_core::fd_curvature::{gaussian_curvature_fd, second_form};
use fdrecon_core::frames::{complete_frame, make_stencil};
use fdrecon_core::losses::{total_loss, FdRegConfig, LossConfig};
use fdrecon_core::metrics::{self, metrics_report};
use fdrecon_core::oracles::{
    analytic_shape_operator, bordered_hessian_curvature, project_hessian, AnalyticShape,
    OracleField,
};
use fdrecon_core::rng::derive_rng;
use fdrecon_core::sampling::{normalize, resample_mesh_surface, BatchConfig, PointCloud};
use fdrecon_core::siren::{EvalScratch, Siren, SirenConfig};
use fdrecon_core::tape::{FieldEval, Tape, FIRST_ORDER_OPS};
use fdrecon_core::trainer::{train_with_evaluator, Evaluator, TrainConfig};
use fdrecon_core::vec3::{vec3, Vec3};

fn pass(n: u32, name: &str, detail: &str) {
    println!("criterion {n:02} ({name}): PASS — {detail}");
}

fn bin_in(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fdrecon"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning fdrecon")
}

fn assert_ok(out: &std::process::Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed (exit {:?})\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A generic quadratic field ½xᵀAx + bᵀx + c whose second derivatives the
/// stencils must reproduce exactly (no truncation term at any h).
fn quadratic() -> AnalyticShape {
    AnalyticShape::Quadratic {
        a: fdrecon_core::vec3::Mat3 {
            rows: [[0.7, 0.15, -0.05], [0.15, -0.4, 0.1], [-0.05, 0.1, 0.25]],
        },
        b: vec3(0.3, -0.2, 0.5),
        c: -0.1,
    }
}

#[test]
fn c01_stencil_exactness_on_quadratics() {
    let start = Instant::now();
    let shape = quadratic();
    let probes = AnalyticShape::Sphere { r: 0.6 }
        .surface_samples(200, &mut derive_rng(1, "c01-points", 0))
        .unwrap();

    let mut worst_ratio: f64 = 0.0;
    for &h in &[0.04, 0.01, 0.002] {
        // Round-off budget: the second differences divide f-value noise
        // (~1e-16 absolute) by h², so the honest bound scales as 1/h².
        let bound = 1e-9 / (h * h);
        let mut rng = derive_rng(2, "c01-frames", 0);
        let tape = Tape::new();
        let field = OracleField::new(&tape, shape);
        for &p in &probes {
            let frame = complete_frame(shape.gradient(p), &mut rng).unwrap();
            let stencil = make_stencil(p, &frame, h).unwrap();
            let form = second_form(|x| field.eval(x), &stencil).unwrap();
            let exact = project_hessian(&shape.hessian(p), &frame);
            for (got, want) in [
                (form.fuu.value(), exact.uu),
                (form.fuv.value(), exact.uv),
                (form.fvv.value(), exact.vv),
            ] {
                let err = (got - want).abs();
                assert!(
                    err < bound,
                    "h={h}: stencil error {err:.3e} exceeds round-off bound {bound:.3e}"
                );
                worst_ratio = worst_ratio.max(err / bound);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "ran {elapsed:.2}s, budget 1s");
    pass(
        1,
        "stencil exactness",
        &format!(
            "600 quadratic probes at h ∈ {{0.04, 0.01, 0.002}}, worst error at \
             {worst_ratio:.1e}× the round-off bound, {elapsed:.2}s"
        ),
    );
}

#[test]
fn c02_convergence_order_via_verify_stencils() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = bin_in(dir.path(), &["verify-stencils"]);
    assert_ok(&out, "verify-stencils");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "ran {elapsed:.2}s, budget 10s");

    let report = std::fs::read_to_string(dir.path().join("stencil_report/report.txt")).unwrap();
    let mut orders = Vec::new();
    for shape in ["sphere", "cylinder", "torus"] {
        let row = report
            .lines()
            .find(|l| l.starts_with(shape))
            .unwrap_or_else(|| panic!("no {shape} row in report:\n{report}"));
        let p: f64 = row.split_whitespace().last().unwrap().parse().unwrap();
        assert!(
            (1.5..=2.5).contains(&p),
            "{shape}: fitted order {p} outside [1.5, 2.5]"
        );
        orders.push(format!("{shape} p={p:.2}"));
    }
    pass(
        2,
        "convergence order",
        &format!("{}, {elapsed:.2}s", orders.join(", ")),
    );
}

#[test]
fn c03_curvature_accuracy_on_oracles() {
    let start = Instant::now();
    let h = 0.01;
    let frames = 1000;

    // Mean K_FD over random frames at a fixed on-surface point.
    let mean_k = |shape: AnalyticShape, p: Vec3, stream: &str| -> f64 {
        let mut rng = derive_rng(3, stream, 0);
        let tape = Tape::new();
        let field = OracleField::new(&tape, shape);
        let mut sum = 0.0;
        for _ in 0..frames {
            let frame = complete_frame(shape.gradient(p), &mut rng).unwrap();
            let stencil = make_stencil(p, &frame, h).unwrap();
            let form = second_form(|x| field.eval(x), &stencil).unwrap();
            sum += gaussian_curvature_fd(&form, None).unwrap().value();
        }
        sum / frames as f64
    };

    let sphere_p = vec3(1.0, 2.0, 2.0).normalized(1e-12).unwrap() * 0.5;
    let k_sphere = mean_k(AnalyticShape::Sphere { r: 0.5 }, sphere_p, "sphere");
    assert!(
        (k_sphere - 4.0).abs() < 0.01 * 4.0,
        "sphere mean K_FD {k_sphere} not within 1% of 4"
    );

    let cyl_p = vec3(0.3, 0.4, 0.37); // radius 0.5, generic height
    let k_cyl = mean_k(AnalyticShape::Cylinder { r: 0.5 }, cyl_p, "cylinder");
    assert!(
        k_cyl.abs() < 1e-2,
        "cylinder mean |K_FD| {} not < 1e-2",
        k_cyl.abs()
    );

    // Outer equator of the R=1, r=0.25 torus: K = 1/(r(R+r)) = 3.2.
    let torus_p = vec3(1.25, 0.0, 0.0);
    let k_torus = mean_k(
        AnalyticShape::Torus {
            big_r: 1.0,
            small_r: 0.25,
        },
        torus_p,
        "torus",
    );
    assert!(
        (k_torus - 3.2).abs() < 0.02 * 3.2,
        "torus outer-equator K_FD {k_torus} not within 2% of 3.2"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "ran {elapsed:.2}s, budget 10s");
    pass(
        3,
        "curvature accuracy",
        &format!(
            "sphere K {k_sphere:.4} (target 4 ±1%), cylinder |K| {:.2e} (< 1e-2), \
             torus K {k_torus:.4} (target 3.2 ±2%), {frames} frames each, {elapsed:.2}s",
            k_cyl.abs()
        ),
    );
}

#[test]
fn c04_bordered_hessian_matches_shape_operator_determinant() {
    // Two independent closed forms of Gaussian curvature: det of the
    // tangent-projected shape operator, (H_uu·H_vv − H_uv²)/‖∇f‖² in an
    // orthonormal tangent frame, versus the bordered 4×4 determinant
    // −det([[H, ∇f],[∇fᵀ, 0]])/‖∇f‖⁴. Agreement to 1e-9 (relative, floored
    // at 1) is pure round-off for unit-scale oracles.
    let shapes: Vec<(&str, AnalyticShape)> = vec![
        (
            "plane",
            AnalyticShape::Plane {
                normal: vec3(1.0, 2.0, -2.0).normalized(1e-12).unwrap(),
                offset: 0.1,
            },
        ),
        ("sphere", AnalyticShape::Sphere { r: 0.5 }),
        ("cylinder", AnalyticShape::Cylinder { r: 0.5 }),
        (
            "torus",
            AnalyticShape::Torus {
                big_r: 1.0,
                small_r: 0.25,
            },
        ),
        (
            "box",
            AnalyticShape::Box {
                half: vec3(0.5, 0.4, 0.3),
            },
        ),
        (
            "rounded box",
            AnalyticShape::RoundedBox {
                half: vec3(0.4, 0.4, 0.4),
                radius: 0.08,
            },
        ),
    ];

    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for (name, shape) in &shapes {
        let mut rng = derive_rng(4, name, 0);
        let points = shape.surface_samples(200, &mut rng).unwrap();
        for &p in &points {
            let g = shape.gradient(p);
            let frame = complete_frame(g, &mut rng).unwrap();
            let proj = match analytic_shape_operator(shape, p, &frame) {
                Ok(p) => p,
                // Box surface samples can land within the medial guard of a
                // concave edge; those points are outside the smooth region
                // the definitions address.
                Err(_) => continue,
            };
            let det_s = (proj.uu * proj.vv - proj.uv * proj.uv) / g.norm_sq();
            let bordered = bordered_hessian_curvature(shape, p).unwrap();
            let err = (det_s - bordered).abs() / det_s.abs().max(1.0);
            assert!(
                err < 1e-9,
                "{name} at {p:?}: det(S) {det_s} vs bordered {bordered} (rel {err:.2e})"
            );
            worst = worst.max(err);
            count += 1;
        }
    }

    // The quadratic oracle has no surface sampler, but the identity holds at
    // any point through which a level set passes, so generic points serve.
    let quad = quadratic();
    let mut rng = derive_rng(4, "quadratic", 0);
    for _ in 0..200 {
        let p = vec3(
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
        );
        let g = quad.gradient(p);
        let frame = match complete_frame(g, &mut rng) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let proj = analytic_shape_operator(&quad, p, &frame).unwrap();
        let det_s = (proj.uu * proj.vv - proj.uv * proj.uv) / g.norm_sq();
        let bordered = bordered_hessian_curvature(&quad, p).unwrap();
        let err = (det_s - bordered).abs() / det_s.abs().max(1.0);
        assert!(
            err < 1e-9,
            "quadratic at {p:?}: det(S) {det_s} vs bordered {bordered} (rel {err:.2e})"
        );
        worst = worst.max(err);
        count += 1;
    }

    pass(
        4,
        "definition consistency",
        &format!("{count} points across 7 oracles, worst relative gap {worst:.1e}"),
    );
}

#[test]
fn c05_parameter_gradients_match_central_differences() {
    let start = Instant::now();
    let net = Siren::init(
        5,
        SirenConfig {
            depth: 2,
            width: 16,
            omega0: 30.0,
        },
    )
    .unwrap();

    let mut rng = derive_rng(5, "c05-batch", 0);
    let mut draw = |n: usize| -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                vec3(
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.8..0.8),
                )
            })
            .collect()
    };
    let (surface, off, shell) = (draw(20), draw(20), draw(20));

    // The shell frames are frozen once so the finite-difference probe and
    // the tape differentiate the same function of the parameters.
    let mut scratch = EvalScratch::default();
    let mut frame_rng = derive_rng(5, "c05-frames", 0);
    let stencils: Vec<_> = shell
        .iter()
        .map(|&x0| {
            let (_, g) = net.eval_grad_plain(x0, &mut scratch);
            let frame = complete_frame(g, &mut frame_rng).unwrap();
            make_stencil(x0, &frame, 1e-2).unwrap()
        })
        .collect();

    let weights = fdrecon_core::losses::LossWeights::default();
    let alpha = 100.0;

    // Plain (tape-free) recomputation of each term and the weighted total.
    let terms = |n: &Siren, s: &mut EvalScratch| -> [f64; 4] {
        let dm = surface.iter().map(|&x| n.eval_plain(x, s).abs()).sum::<f64>()
            / surface.len() as f64;
        let dnm = off
            .iter()
            .map(|&x| (-alpha * n.eval_plain(x, s).abs()).exp())
            .sum::<f64>()
            / off.len() as f64;
        let eik = surface
            .iter()
            .chain(off.iter())
            .map(|&x| {
                let (_, g) = n.eval_grad_plain(x, s);
                (g.norm() - 1.0).powi(2)
            })
            .sum::<f64>()
            / (surface.len() + off.len()) as f64;
        let fd = stencils
            .iter()
            .map(|st| {
                let tape = Tape::new();
                let form =
                    second_form(|x| Ok(tape.constant(n.eval_plain(x, s))), st).unwrap();
                gaussian_curvature_fd(&form, None).unwrap().value().abs()
            })
            .sum::<f64>()
            / stencils.len() as f64;
        [dm, dnm, eik, fd]
    };
    let weighted = |t: &[f64; 4]| -> f64 {
        weights.lambda_dm * t[0]
            + weights.lambda_dnm * t[1]
            + weights.lambda_eik * t[2]
            + weights.lambda_fd * t[3]
    };

    // Adjoints of the weighted total via one reverse sweep over the same
    // frozen-frame graph.
    let tape = Tape::new();
    let bound = net.bind(&tape);
    let dm_node = fdrecon_core::losses::dirichlet_loss(
        &tape,
        &surface.iter().map(|&x| bound.eval(x).unwrap()).collect::<Vec<_>>(),
    )
    .unwrap();
    let dnm_node = fdrecon_core::losses::nonmanifold_loss(
        &tape,
        &off.iter().map(|&x| bound.eval(x).unwrap()).collect::<Vec<_>>(),
        alpha,
    )
    .unwrap();
    let eik_node = fdrecon_core::losses::eikonal_loss(
        &tape,
        &surface
            .iter()
            .chain(off.iter())
            .map(|&x| bound.eval_with_gradient(x).unwrap())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let fd_terms: Vec<_> = stencils
        .iter()
        .map(|st| {
            let form = second_form(|x| bound.eval(x), st).unwrap();
            gaussian_curvature_fd(&form, None).unwrap().abs()
        })
        .collect();
    let fd_node = tape.sum(&fd_terms).scale(1.0 / fd_terms.len() as f64);
    let total_node = dm_node.scale(weights.lambda_dm)
        + dnm_node.scale(weights.lambda_dnm)
        + eik_node.scale(weights.lambda_eik)
        + fd_node.scale(weights.lambda_fd);
    let grads = tape.backward(total_node);
    let adj = grads.wrt_range(bound.param_range());

    // Central differences over every parameter. Probe step 1e-5 balances
    // O(h²) truncation (~1e-10 · |f⁗|) against round-off (~1e-11/h); terms
    // where both sides sit under 1e-5 are below the probe's noise floor and
    // carry no signal to compare.
    let h = 1e-5;
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for i in 0..net.params.len() {
        let mut hi = net.clone();
        hi.params[i] += h;
        let mut lo = net.clone();
        lo.params[i] -= h;
        let fd_grad = (weighted(&terms(&hi, &mut scratch)) - weighted(&terms(&lo, &mut scratch)))
            / (2.0 * h);
        if fd_grad.abs().max(adj[i].abs()) < 1e-5 {
            continue;
        }
        let rel = (fd_grad - adj[i]).abs() / fd_grad.abs().max(adj[i].abs());
        assert!(
            rel < 1e-4,
            "param {i}: central FD {fd_grad} vs adjoint {} (rel {rel:.2e})",
            adj[i]
        );
        worst = worst.max(rel);
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "ran {elapsed:.2}s, budget 30s");
    pass(
        5,
        "differentiation contract",
        &format!(
            "{checked}/{} parameters above the noise floor, worst relative error {worst:.1e}, \
             {elapsed:.2}s",
            net.params.len()
        ),
    );
}

#[test]
fn c06_no_second_order_nodes_and_nine_evals_per_shell_point() {
    // One full training iteration's graph: census every op kind on the tape
    // after the backward sweep and demand it stay within the first-order set.
    let net = Siren::init(
        6,
        SirenConfig {
            depth: 2,
            width: 8,
            omega0: 30.0,
        },
    )
    .unwrap();
    let mut rng = derive_rng(6, "c06-batch", 0);
    let sphere = AnalyticShape::Sphere { r: 0.5 };
    let surface = sphere.surface_samples(12, &mut rng).unwrap();
    let offsurface = sphere.surface_samples(12, &mut rng).unwrap();
    let shell = sphere.surface_samples(10, &mut rng).unwrap();

    let tape = Tape::new();
    let bound = net.bind(&tape);
    let (total, _, stats) = total_loss(
        &tape,
        &bound,
        &surface,
        &offsurface,
        &shell,
        &LossConfig::default(),
        &mut rng,
    )
    .unwrap();
    let _ = tape.backward(total);
    let census = tape.op_census();
    for kind in census.keys() {
        assert!(
            FIRST_ORDER_OPS.contains(kind),
            "tape contains non-first-order op kind {kind}"
        );
    }
    assert_eq!(stats.skipped, 0);
    assert_eq!(
        bound.eval_count(),
        (12 + 12 + 9 * 10) as u64,
        "training-iteration budget: surface + offsurface + 9·shell"
    );

    // The regularizer in isolation: exactly 9 forward evaluations per point.
    let tape = Tape::new();
    let field = OracleField::new(&tape, sphere);
    let (_, stats) = fdrecon_core::losses::fd_regularizer(
        &tape,
        &field,
        &shell,
        &FdRegConfig::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(stats.kept, shell.len());
    assert_eq!(field.eval_count(), 9 * shell.len() as u64);

    pass(
        6,
        "no second-order machinery",
        &format!(
            "op census {{{}}} all first-order; {} evals for {} shell points",
            census.keys().cloned().collect::<Vec<_>>().join(", "),
            9 * shell.len(),
            shell.len()
        ),
    );
}

/// Dense samples of the analytic sphere with outward normals: the ground
/// truth that reconstructions are scored against.
fn analytic_sphere_cloud(n: usize) -> PointCloud {
    let shape = AnalyticShape::Sphere { r: 0.5 };
    let mut rng = derive_rng(7, "gt-sphere", 0);
    let points = shape.surface_samples(n, &mut rng).unwrap();
    let normals = points
        .iter()
        .map(|&p| shape.gradient(p).normalized(1e-12).unwrap())
        .collect();
    PointCloud::new(points, Some(normals)).unwrap()
}

fn score_against_sphere(mesh_path: &Path) -> metrics::MetricsReport {
    let mesh = fdrecon_core::io::read_mesh(mesh_path).unwrap();
    let mut rng = derive_rng(7, "score-resample", 0);
    let pred = resample_mesh_surface(&mesh, 50_000, &mut rng).unwrap();
    let gt = analytic_sphere_cloud(50_000);
    metrics_report(&pred, &gt, 0.005).unwrap()
}

#[test]
fn c07_end_to_end_reconstruction_of_a_sphere_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin_in(
        dir.path(),
        &[
            "make-cloud",
            "sphere",
            "sphere5k.xyz",
            "--points",
            "5000",
            "--seed",
            "11",
        ],
    );
    assert_ok(&out, "make-cloud");

    let mut lines = Vec::new();
    for variant in ["ncr-fd", "nsh-fd"] {
        let start = Instant::now();
        let run = format!("run_{variant}");
        let out = bin_in(
            dir.path(),
            &[
                "reconstruct",
                "sphere5k.xyz",
                "--variant",
                variant,
                "--out",
                &run,
            ],
        );
        assert_ok(&out, &format!("reconstruct ({variant})"));
        let m = score_against_sphere(&dir.path().join(&run).join("mesh.obj"));
        let nc = m.nc_x100.expect("both sides carry normals");
        assert!(
            m.cd_x1000 < 5.0,
            "{variant}: CD×10³ {} ≥ 5 against the analytic sphere",
            m.cd_x1000
        );
        assert!(nc > 99.0, "{variant}: NC×10² {nc} ≤ 99");
        assert!(m.f1_x100 > 95.0, "{variant}: F1×10² {} ≤ 95", m.f1_x100);
        lines.push(format!(
            "{variant} CD×10³ {:.3} NC×10² {:.2} F1×10² {:.2} in {:.0}s",
            m.cd_x1000,
            nc,
            m.f1_x100,
            start.elapsed().as_secs_f64()
        ));
    }
    pass(
        7,
        "end-to-end reconstruction",
        &format!("5k-point sphere at default config: {}", lines.join("; ")),
    );
}

/// Evaluator that reports the same score forever: a plateau from the very
/// first evaluation.
struct Frozen;
impl Evaluator for Frozen {
    fn evaluate(&mut self, _net: &Siren) -> f64 {
        1.0
    }
}

#[test]
fn c08_early_stopping_halts_on_a_frozen_evaluator() {
    let cloud = analytic_sphere_cloud(400);
    let normalized = normalize(&cloud).unwrap();
    let cfg = TrainConfig {
        lr: 1e-4,
        max_iters: 500,
        patience: 50,
        eval_every: 10,
        batch: BatchConfig {
            surface: 16,
            offsurface: 16,
            shell_sigma: 1e-2,
        },
        loss: LossConfig::default(),
        eval_mc_res: 16,
        eval_points: 100,
        seed: 8,
    };
    let net = Siren::init(
        8,
        SirenConfig {
            depth: 2,
            width: 8,
            omega0: 30.0,
        },
    )
    .unwrap();
    let outcome = train_with_evaluator(&normalized, net, &cfg, &mut Frozen).unwrap();

    // The frozen score becomes "best" at the first evaluation (iteration
    // eval_every − 1); every later evaluation ties, never improves. The run
    // must stop within patience + eval_every iterations of that plateau
    // start, far short of max_iters.
    let plateau_start = cfg.eval_every - 1;
    let bound = plateau_start + cfg.patience + cfg.eval_every;
    assert!(
        outcome.report.iters_run <= bound,
        "ran {} iterations, bound {bound}",
        outcome.report.iters_run
    );
    assert!(outcome.report.iters_run < cfg.max_iters);
    pass(
        8,
        "early stopping",
        &format!(
            "frozen evaluator: halted after {} iterations (≤ {} = plateau start {} + \
             patience {} + cadence {})",
            outcome.report.iters_run, bound, plateau_start, cfg.patience, cfg.eval_every
        ),
    );
}

#[test]
fn c09_lambda_plateau_on_a_rounded_cube() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin_in(
        dir.path(),
        &[
            "make-cloud",
            "rounded-cube",
            "cube5k.xyz",
            "--points",
            "5000",
            "--seed",
            "9",
        ],
    );
    assert_ok(&out, "make-cloud rounded-cube");

    let out = bin_in(
        dir.path(),
        &[
            "sweep-lambda",
            "cube5k.xyz",
            "--lambdas",
            "0.6,1,3",
            "--out",
            "sweep",
        ],
    );
    assert_ok(&out, "sweep-lambda");

    let csv = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    let mut cd = Vec::new();
    let mut nc = Vec::new();
    let mut f1 = Vec::new();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[8], "ok", "sweep row failed: {line}");
        cd.push(cols[1].parse::<f64>().unwrap());
        nc.push(cols[2].parse::<f64>().unwrap());
        f1.push(cols[3].parse::<f64>().unwrap());
    }
    assert_eq!(cd.len(), 3);

    let spread = |v: &[f64]| -> f64 {
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / max.abs()
    };
    let (s_cd, s_nc, s_f1) = (spread(&cd), spread(&nc), spread(&f1));
    for (name, s) in [("CD", s_cd), ("NC", s_nc), ("F1", s_f1)] {
        assert!(
            s < 0.10,
            "{name} spread {s:.3} across λ_fd ∈ {{0.6, 1, 3}} exceeds 10%"
        );
    }
    pass(
        9,
        "λ-plateau",
        &format!(
            "rounded cube, λ_fd ∈ {{0.6, 1, 3}}: CD×10³ {cd:?} (spread {:.1}%), \
             NC×10² spread {:.1}%, F1×10² spread {:.1}%",
            100.0 * s_cd,
            100.0 * s_nc,
            100.0 * s_f1
        ),
    );
}

#[test]
fn c10_metric_oracle_equivalence_and_properties() {
    // Brute-force nearest neighbours, written blind to the accelerated
    // implementation: the equality demanded here is exact, not approximate.
    fn nn_brute(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
        from.iter()
            .map(|&p| {
                to.iter()
                    .map(|&q| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    let mut rng = derive_rng(10, "c10-points", 0);
    let mut cube_points = |n: usize, spread: f64| -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                vec3(
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                )
            })
            .collect()
    };

    for trial in 0..4 {
        // Mixed scales exercise the grid accelerator's cell sizing.
        let spread = [1.0, 0.01, 17.0, 0.3][trial];
        let a = cube_points(500, spread);
        let b = cube_points(500, spread);

        let fast_ab = metrics::nearest_distances(&a, &b).unwrap();
        assert_eq!(fast_ab, nn_brute(&a, &b), "nearest distances differ (trial {trial})");

        let d_ab = nn_brute(&a, &b);
        let d_ba = nn_brute(&b, &a);
        let cd_brute = (d_ab.iter().sum::<f64>() / 500.0 + d_ba.iter().sum::<f64>() / 500.0) / 2.0;
        let h_brute = d_ab
            .iter()
            .chain(d_ba.iter())
            .cloned()
            .fold(f64::MIN, f64::max);
        assert_eq!(metrics::chamfer(&a, &b).unwrap(), cd_brute, "chamfer (trial {trial})");
        assert_eq!(
            metrics::hausdorff(&a, &b).unwrap(),
            h_brute,
            "hausdorff (trial {trial})"
        );
        // The library's own O(n²) reference path must agree bit for bit too.
        assert_eq!(
            metrics::chamfer(&a, &b).unwrap(),
            metrics::chamfer_brute(&a, &b).unwrap()
        );
        assert_eq!(
            metrics::hausdorff(&a, &b).unwrap(),
            metrics::hausdorff_brute(&a, &b).unwrap()
        );

        // Symmetry, identity, and scale equivariance.
        assert_eq!(
            metrics::chamfer(&a, &b).unwrap(),
            metrics::chamfer(&b, &a).unwrap()
        );
        assert_eq!(
            metrics::hausdorff(&a, &b).unwrap(),
            metrics::hausdorff(&b, &a).unwrap()
        );
        assert_eq!(metrics::chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(metrics::f1_score(&a, &a, 1e-9).unwrap(), 100.0);
        let s = 2.5;
        let a2: Vec<Vec3> = a.iter().map(|&p| p * s).collect();
        let b2: Vec<Vec3> = b.iter().map(|&p| p * s).collect();
        let scaled = metrics::chamfer(&a2, &b2).unwrap();
        let base = metrics::chamfer(&a, &b).unwrap();
        assert!(
            (scaled - s * base).abs() <= 1e-12 * scaled.abs(),
            "chamfer not scale-equivariant: {scaled} vs {}",
            s * base
        );
        assert!(metrics::hausdorff(&a, &b).unwrap() >= d_ab.iter().cloned().fold(f64::MIN, f64::max));
    }

    // Orientation-agnostic normal consistency: flipping one side is free.
    let sphere = analytic_sphere_cloud(500);
    let normals = sphere.normals.as_ref().unwrap();
    let flipped: Vec<Vec3> = normals.iter().map(|&n| -n).collect();
    let nc = metrics::normal_consistency(
        (&sphere.points, normals.as_slice()),
        (&sphere.points, &flipped),
    )
    .unwrap();
    assert!((nc - 100.0).abs() < 1e-9, "flipped normals should score 100, got {nc}");

    pass(
        10,
        "metrics oracle equivalence",
        "4 randomized 500-point trials: accelerated NN/chamfer/hausdorff equal brute force \
         exactly; symmetry, identity, scale, and orientation properties hold",
    );
}
