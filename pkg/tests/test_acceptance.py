"""Acceptance criteria 1 to 11, each run through the experiment runner.

Every test prints one ``criterion N: PASS|FAIL`` line, which is also
collected into the terminal summary.
"""

from __future__ import annotations

from pseudoherm_lab.experiments import ExperimentConfig, run

from .conftest import ACCEPTANCE_LINES

MODELS_ALL = ["heisenberg:1", "heisenberg:2", "sphere:1", "sphere:2", "scaled-heisenberg:1", "scaled-heisenberg:2"]


def _run(tmp_path, experiment, model):
    out = tmp_path / f"{experiment}_{model.replace(':', '_')}"
    return run(ExperimentConfig(experiment=experiment, model=model, out=str(out)))


def _checks(report) -> dict:
    return {c.name: c for c in report.checks}


def _verdict(number: int, title: str, reports, required=()) -> None:
    """Record and print the outcome; every check of every report must pass.

    ``required`` lists check names every report must contain, or maps an
    experiment id to such a list.
    """
    failures = []
    for rep in reports:
        checks = _checks(rep)
        names = required.get(rep.id, ()) if isinstance(required, dict) else required
        failures += [f"{rep.config['model']}/{c.name}={c.value}" for c in rep.checks if not c.passed]
        failures += [f"{rep.config['model']}/{name} missing" for name in names if name not in checks]
        if not rep.checks:
            failures.append(f"{rep.config['model']}: no checks")
    status = "PASS" if not failures else "FAIL"
    line = f"criterion {number:>2}: {status}  {title}"
    if failures:
        line += "  [" + "; ".join(failures) + "]"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert not failures, line


def test_criterion_01_connection_axioms(tmp_path):
    reps = [_run(tmp_path, "axioms", m) for m in MODELS_ALL]
    _verdict(1, "connection axioms and least-squares oracle", reps, ["oracle_agreement", "axiom_metric"])


def test_criterion_02_flatness_and_space_form(tmp_path):
    reps = [_run(tmp_path, "identities", m) for m in ("heisenberg:1", "heisenberg:2")]
    _verdict(2, "Heisenberg flatness and constant curvature of the Webster metric", reps,
             ["flat_curvature_norm", "identity_space_form_curvature"])


def test_criterion_03_sphere_holomorphic_curvature(tmp_path):
    reps = [_run(tmp_path, "identities", m) for m in ("sphere:1", "sphere:2")]
    _verdict(3, "sphere holomorphic sectional curvature equals one", reps, ["holomorphic_sectional_minus_one"])


def test_criterion_04_sub_riemannian_equivalence(tmp_path):
    models = ("heisenberg:1", "heisenberg:2", "scaled-heisenberg:1", "scaled-heisenberg:2")
    reps = [_run(tmp_path, "sr-equivalence", m) for m in models]
    _verdict(4, "Hamiltonian and connection-form geodesics agree", reps)


def test_criterion_05_conjugate_bounds(tmp_path):
    reps = [_run(tmp_path, "conjugate-sphere", "sphere:1"), _run(tmp_path, "no-conjugate-flat", "heisenberg:1")]
    _verdict(5, "first conjugate point on the 3-sphere, none on the Heisenberg group", reps, {
        "conjugate-sphere": ["first_conjugate_minus_half_pi", "sectional_bound", "ricci_bound"],
        "no-conjugate-flat": ["conjugate_points_found"],
    })


def test_criterion_06_jacobi_dimensions(tmp_path):
    reps = [_run(tmp_path, "jacobi-dims", m) for m in ("heisenberg:1", "heisenberg:2", "sphere:1", "sphere:2")]
    _verdict(6, "Jacobi and horizontal Jacobi space dimensions", reps, ["dim_jacobi_fields"])


def test_criterion_07_first_variation(tmp_path):
    reps = [_run(tmp_path, "variation-1", m) for m in ("scaled-heisenberg:1", "heisenberg:1")]
    _verdict(7, "first variation of length", reps, ["first_variation_rel_error"])
    assert "torsion_integral_rel_error" in _checks(reps[0])
    assert "sasakian_critical" in _checks(reps[1])


def test_criterion_08_second_variation(tmp_path):
    reps = [_run(tmp_path, "variation-2", m) for m in ("heisenberg:1", "sphere:1")]
    _verdict(8, "second variation and index form", reps,
             ["second_variation_rel_error", "integration_by_parts_rel_error"])
    assert "sphere_index_minus_8_over_pi" in _checks(reps[1])


def test_criterion_09_fefferman(tmp_path):
    reps = [_run(tmp_path, "fefferman", m) for m in ("heisenberg:1", "heisenberg:2")]
    _verdict(9, "Fefferman geodesic round trips and connection identities", reps,
             ["lift_is_geodesic", "projection_is_sr_geodesic", "energy_conserved"])


def test_criterion_10_nonminimality(tmp_path):
    reps = [_run(tmp_path, "nonminimality", "sphere:2")]
    _verdict(10, "negative index and a shorter nearby curve on the 5-sphere", reps,
             ["index_negative", "shorter_curve"])


def test_criterion_11_curvature_identities(tmp_path):
    torsionful = [_run(tmp_path, "identities", m) for m in ("scaled-heisenberg:1", "scaled-heisenberg:2")]
    sasakian = [_run(tmp_path, "identities", m) for m in ("heisenberg:1", "sphere:1")]
    required = ["identity_A2_first_bianchi", "identity_A3_reeb_bianchi", "identity_A4_first_pair",
                "identity_A5_second_pair", "identity_A8_pair_interchange"]
    _verdict(11, "curvature identities with torsion and pair symmetry when Sasakian", torsionful + sasakian, required)
    for rep in sasakian:
        assert _checks(rep)["identity_pair_symmetry"].value < 1e-6
