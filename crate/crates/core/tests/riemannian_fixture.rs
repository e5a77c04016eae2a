//! Oracle suite built around the Christoffel route: the geodesic spray of a
//! metric computed straight from the metric tensor must satisfy every
//! variational operator exactly, its jet systems must admit the known
//! solution, and the analysis pipeline must never rule it out.

mod common;

use common::{default_samples, exp_metric_fixture, power_spray};
use metrizer::distribution::contains;
use metrizer::expr::{evaluate, parse, Coordinate, Expr};
use metrizer::jets::{assemble_jet_system, JetCoordinates};
use metrizer::operators::{
    check_reduction_identity, residual_curvature, residual_euler_lagrange,
    residual_homogeneity, residual_horizontal, residual_metric_compat, tensor_summary,
    EnergyCandidate,
};
use metrizer::spraygeo::SprayContext;
use metrizer::verdict::{analyze, consistent_with_energy, AnalysisConfig, Outcome};

#[test]
fn christoffel_spray_satisfies_euler_lagrange_identically() {
    let (ctx, _) = exp_metric_fixture();
    // the oracle produces f^1 = y2^2 - y1^2 and f^2 = -2 y1 y2
    let f1 = parse("y2^2 - y1^2", 2, &[]).unwrap().simplified();
    let f2 = parse("-2*y1*y2", 2, &[]).unwrap().simplified();
    assert_eq!(ctx.spray.coefficients()[0], f1);
    assert_eq!(ctx.spray.coefficients()[1], f2);
}

#[test]
fn metric_energy_passes_all_operator_residuals() {
    let (ctx, energy) = exp_metric_fixture();
    let samples = default_samples(&ctx);
    assert_eq!(samples.len(), 20);

    let hom = residual_homogeneity(&energy, &ctx, &samples);
    let el = residual_euler_lagrange(&energy, &ctx, &samples);
    let hor = residual_horizontal(&energy, &ctx, &samples);
    let compat = residual_metric_compat(&energy, &ctx, &samples);
    for (label, report) in [
        ("homogeneity", &hom),
        ("euler_lagrange", &el),
        ("horizontal", &hor),
        ("metric_compat", &compat),
    ] {
        assert!(report.all_ok(), "{label} hit a singular sample");
        assert!(
            report.max_rel() <= 1e-9,
            "{label} residual {:.3e} above 1e-9",
            report.max_rel()
        );
    }

    let curv = residual_curvature(&energy, &ctx, &samples);
    assert!(curv.bracket.max_rel() <= 1e-9);
    assert!(curv.berwald.max_rel() <= 1e-9);

    let tensors = tensor_summary(&energy, &ctx, &samples);
    assert!(tensors.positive_definite_everywhere);
}

#[test]
fn reduction_identity_holds_for_the_metric_pair() {
    let (ctx, energy) = exp_metric_fixture();
    let samples = default_samples(&ctx);
    let gap = check_reduction_identity(&energy, &ctx, &samples);
    assert!(gap.all_ok());
    assert!(gap.max_rel() <= 1e-8, "gap {:.3e}", gap.max_rel());
}

#[test]
fn analysis_never_obstructs_a_metrizable_spray() {
    let (ctx, energy) = exp_metric_fixture();
    let samples = default_samples(&ctx);
    let analysis = analyze(&ctx, &samples, &AnalysisConfig::default()).unwrap();
    assert!(analysis.berwald_flat);
    assert_ne!(analysis.finsler.outcome, Outcome::Obstructed);
    assert_ne!(analysis.landsberg_verdict.outcome, Outcome::Obstructed);
    assert!(consistent_with_energy(&analysis, &ctx, &energy, &samples, 1e-9));
}

#[test]
fn perturbations_move_both_reduced_residuals_together() {
    // adding d * y1^3/y2 to the solution keeps homogeneity exact while the
    // Euler-Lagrange and horizontal residuals grow in lockstep
    let (ctx, energy) = exp_metric_fixture();
    let samples = default_samples(&ctx);
    let bump = parse("y1^3/y2", 2, &[]).unwrap();
    for delta in [1e-6, 1e-4, 1e-2] {
        let perturbed = EnergyCandidate::new(
            Expr::sum(vec![
                energy.expr().clone(),
                &Expr::constant(delta) * &bump,
            ]),
        );
        let hom = residual_homogeneity(&perturbed, &ctx, &samples);
        assert!(hom.max_rel() <= 1e-10, "perturbation broke homogeneity");

        let el = residual_euler_lagrange(&perturbed, &ctx, &samples).max_abs();
        let hor = residual_horizontal(&perturbed, &ctx, &samples).max_abs();
        assert!(el > 0.0 && hor > 0.0);
        let ratio = el / hor;
        assert!(
            (0.02..=50.0).contains(&ratio),
            "residuals decoupled at delta {delta}: pe {el:.3e} dh {hor:.3e}"
        );
        // both scale linearly with delta
        assert!(el <= delta * 1e3 && el >= delta * 1e-3);
    }
}

#[test]
fn known_solution_jet_lies_in_every_assembled_system() {
    let (ctx, energy) = exp_metric_fixture();
    let samples = default_samples(&ctx);
    let analysis = analyze(&ctx, &samples, &AnalysisConfig::default()).unwrap();
    let report = &analysis.holonomy;

    for v in samples.base_representatives() {
        let system = assemble_jet_system(report, v, ctx.params()).unwrap();
        let layout = system.layout;
        let mut jet = JetCoordinates::zeros(layout);
        let e = energy.expr();
        jet.data[layout.value()] = evaluate(e, v, ctx.params()).unwrap();
        for slot in 0..4 {
            let d = e.differentiate(Coordinate::from_slot(slot, 2));
            jet.data[layout.first(slot)] = evaluate(&d, v, ctx.params()).unwrap();
            for slot2 in slot..4 {
                let dd = d.differentiate(Coordinate::from_slot(slot2, 2));
                jet.data[layout.second(slot, slot2)] =
                    evaluate(&dd, v, ctx.params()).unwrap();
            }
        }
        assert!(
            system.residual(&jet) <= 1e-9,
            "solution jet violates the system at {v}: {:.3e}",
            system.residual(&jet)
        );
    }
}

#[test]
fn sqrt_profile_frame_bracket_is_vertical_and_matches_the_oracle() {
    // the curvature bracket of the square-root profile spray at a fixed
    // point: vertical, nonzero, and consistent with finite differences of
    // the frame
    let ctx = SprayContext::build(common::sqrt_profile_spray(1.0, 1.0, 1.0));
    let samples = default_samples(&ctx);
    let hom = metrizer::spraygeo::validate_homogeneity(&ctx.spray, &samples);
    assert!(hom.pass);
    assert!(hom.max_residual() <= 1e-12, "homogeneity residual {}", hom.max_residual());

    let bracket = ctx.frame[0].lie_bracket(&ctx.frame[1]);
    let p = common::pt([0.0, 0.0], [1.0, 1.0]);
    let vals = bracket.evaluate(&p, ctx.params()).unwrap();
    assert!(vals[0].abs() <= 1e-12 && vals[1].abs() <= 1e-12, "bracket not vertical");
    assert!(
        vals[2].abs() + vals[3].abs() > 1e-6,
        "curvature bracket unexpectedly vanishes"
    );
    let oracle = common::fd_bracket(&ctx.frame[0], &ctx.frame[1], &p, 1e-6, ctx.params())
        .expect("frame is evaluable near the point");
    for (s, f) in vals.iter().zip(&oracle) {
        assert!((s - f).abs() <= 1e-5 * (1.0 + s.abs()), "bracket {s} vs oracle {f}");
    }
}

#[test]
fn connection_fiber_derivatives_are_symmetric() {
    let ctx = SprayContext::build(common::sqrt_profile_spray(1.0, 1.0, 1.0));
    let samples = default_samples(&ctx);
    for p in samples.points() {
        for i in 1..=2 {
            let a = evaluate(ctx.connection.gamma_deriv(i, 1, 2), p, ctx.params()).unwrap();
            let b = evaluate(ctx.connection.gamma_deriv(i, 2, 1), p, ctx.params()).unwrap();
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn holonomy_embeds_in_the_landsberg_distribution() {
    // for a curvature-carrying spray both distributions exist; every
    // holonomy generator must sit inside the Landsberg span pointwise
    let ctx = SprayContext::build(power_spray(3, 4, 1.0, 1.0));
    let samples = default_samples(&ctx);
    let analysis = analyze(&ctx, &samples, &AnalysisConfig::default()).unwrap();
    let landsberg = analysis.landsberg.as_ref().expect("nonflat spray");
    for gen in &analysis.holonomy.generators {
        let residuals = contains(gen, landsberg, &samples, ctx.params()).unwrap();
        for r in residuals {
            assert!(r <= 1e-8, "holonomy generator escapes the Landsberg span: {r}");
        }
    }
}

#[test]
fn flat_spray_with_euclidean_energy_agrees_with_the_fixture_machinery() {
    let ctx = SprayContext::build(common::flat_spray());
    let samples = default_samples(&ctx);
    let analysis = analyze(&ctx, &samples, &AnalysisConfig::default()).unwrap();
    assert_eq!(analysis.finsler.outcome, Outcome::NecessaryConditionsPass);
    let energy = EnergyCandidate::new(parse("0.5*(y1^2 + y2^2)", 2, &[]).unwrap());
    assert!(consistent_with_energy(&analysis, &ctx, &energy, &samples, 1e-9));
}
