use panoflow::estimate::{EstimatorConfig, EstimatorRegistry};
use panoflow::flow::reproject_flow;
use panoflow::fusion::{oracle_bounds, OracleCriterion};
use panoflow::metrics::evaluate;
use panoflow::pipeline::{estimate_in, pair_seed};
use panoflow::projection::ProjectionSpec;
use panoflow::synth::{build_scene, ground_truth_flow, render_frame, Schedule};

/// Lower bound must beat the better single by this factor.
const LOWER_BOUND_GAIN: f64 = 0.9;

#[test]
fn oracle_lower_clearly_beats_complementary_singles() {
    let width = 128;
    let e_spec = ProjectionSpec::equirect(width);
    let (e, c) = (
        e_spec.build().unwrap(),
        ProjectionSpec::tricyl(width).build().unwrap(),
    );
    let scene = build_scene(Schedule::Eft, 2, 20, 31).unwrap();
    let (a, b) = (
        render_frame(&scene, 0, e.as_ref()),
        render_frame(&scene, 1, e.as_ref()),
    );
    let gt = ground_truth_flow(&scene, 0, 1, width).unwrap();

    let mut cfg = EstimatorConfig::with_kind("perturbed-gt");
    cfg.set("profile", "chart").unwrap();
    cfg.set("amplitude", "2").unwrap();
    let est = EstimatorRegistry::default().build(&cfg).unwrap();
    let pe = estimate_in(
        est.as_ref(),
        e.as_ref(),
        e.as_ref(),
        &a,
        &b,
        Some(&gt),
        pair_seed(3, 0, 0, false),
    )
    .unwrap();
    let pc = estimate_in(
        est.as_ref(),
        c.as_ref(),
        e.as_ref(),
        &a,
        &b,
        Some(&gt),
        pair_seed(3, 0, 1, false),
    )
    .unwrap();
    let pc = reproject_flow(&pc, e_spec).unwrap();

    let bounds = oracle_bounds(&pe, &pc, &gt, OracleCriterion::Sd).unwrap();
    let single = evaluate(&pe, &gt, None)
        .unwrap()
        .epe_mean
        .min(evaluate(&pc, &gt, None).unwrap().epe_mean);
    let lower = evaluate(&bounds.lower, &gt, None).unwrap().epe_mean;
    let upper = evaluate(&bounds.upper, &gt, None).unwrap().epe_mean;
    assert!(
        lower < LOWER_BOUND_GAIN * single,
        "lower {lower} vs best single {single}"
    );
    assert!(upper > single);
}
