import numpy as np
import pytest

import lineride.backend as backend
from lineride.backend import (
    BINARY,
    CONTINUOUS,
    BackendError,
    Model,
    compile_lp,
    require_backend,
    solve_lp,
    solve_mip,
    write_lp,
)


@pytest.fixture(params=["native", "scipy"])
def engine(request, monkeypatch):
    if request.param == "scipy":
        monkeypatch.setattr(backend, "_core", None)
    elif not backend.native_engine_active():
        pytest.skip("native engine unavailable in this scipy build")
    return request.param


def test_lp_simple_bound_dual(engine):
    m = Model()
    m.add_variable("x", CONTINUOUS, lb=0.0, obj=1.0)
    m.add_constraint("cap", {"x": 1.0}, "<=", 1.0)
    res = solve_lp(m)
    assert res.status == backend.OPTIMAL
    assert res.objective == pytest.approx(1.0)
    assert res.duals["cap"] == pytest.approx(1.0)


def test_lp_infeasible(engine):
    m = Model()
    m.add_variable("x", CONTINUOUS, lb=0.0, obj=1.0)
    m.add_constraint("neg", {"x": 1.0}, "<=", -1.0)
    assert solve_lp(m).status == backend.INFEASIBLE


def test_lp_empty_model(engine):
    assert solve_lp(Model()).objective == 0.0
    assert solve_lp(Model()).status == backend.OPTIMAL


def test_lp_dual_signs_all_senses(engine):
    m = Model()
    m.add_variable("x", CONTINUOUS, lb=0.0, obj=-1.0)
    m.add_constraint("floor", {"x": 1.0}, ">=", 3.0)
    res = solve_lp(m)
    assert res.objective == pytest.approx(-3.0)
    assert res.duals["floor"] == pytest.approx(-1.0)

    m2 = Model()
    m2.add_variable("x", CONTINUOUS, lb=0.0, obj=2.0)
    m2.add_constraint("pin", {"x": 1.0}, "=", 5.0)
    res2 = solve_lp(m2)
    assert res2.objective == pytest.approx(10.0)
    assert res2.duals["pin"] == pytest.approx(2.0)


def test_lp_unbounded(engine):
    m = Model()
    m.add_variable("x", CONTINUOUS, lb=0.0, obj=1.0)
    m.add_constraint("floor", {"x": 1.0}, ">=", 1.0)
    assert solve_lp(m).status == backend.UNBOUNDED


def test_mip_binary(engine):
    m = Model()
    m.add_variable("x", BINARY, obj=1.0)
    res = solve_mip(m)
    assert res.objective == pytest.approx(1.0)


def test_mip_packing(engine):
    m = Model()
    m.add_variable("x", BINARY, obj=1.0)
    m.add_variable("y", BINARY, obj=1.0)
    m.add_constraint("pack", {"x": 1.0, "y": 1.0}, "<=", 1.0)
    res = solve_mip(m)
    assert res.objective == pytest.approx(1.0)
    assert res.bound == pytest.approx(1.0, abs=1e-6)


def test_mip_time_limit_zero(engine):
    m = Model()
    for i in range(40):
        m.add_variable(("x", i), BINARY, obj=float(i % 7 + 1))
    for i in range(0, 40, 2):
        m.add_constraint(("c", i), {("x", i): 1.0, ("x", i + 1): 1.0}, "<=", 1.0)
    res = solve_mip(m, time_limit=0.0)
    assert res.status == backend.TIME_LIMIT


def test_mip_infeasible(engine):
    m = Model()
    m.add_variable("x", BINARY, obj=1.0)
    m.add_constraint("bad", {"x": 1.0}, ">=", 2.0)
    assert solve_mip(m).status == backend.INFEASIBLE


def test_lp_relaxation_dominates_mip(engine):
    rng = np.random.default_rng(0)
    for trial in range(5):
        m = Model()
        size = 6
        for i in range(size):
            m.add_variable(("x", i), BINARY, obj=float(rng.uniform(0, 5)))
        for row in range(3):
            coeffs = {("x", i): float(rng.uniform(0.1, 1)) for i in range(size)}
            m.add_constraint(("r", row), coeffs, "<=", float(rng.uniform(1, 2)))
        lp = solve_lp(m)
        mip = solve_mip(m)
        assert lp.objective >= mip.objective - 1e-6


def test_resolve_is_stable(engine):
    m = Model()
    m.add_variable("x", CONTINUOUS, lb=0.0, obj=1.0)
    m.add_variable("y", CONTINUOUS, lb=0.0, obj=2.0)
    m.add_constraint("cap", {"x": 1.0, "y": 1.0}, "<=", 4.0)
    first = solve_lp(m).objective
    second = solve_lp(m).objective
    assert first == pytest.approx(second, abs=1e-6)


def test_compiled_lp_bound_overrides(engine):
    m = Model()
    m.add_variable("x", BINARY, obj=3.0)
    m.add_variable("y", BINARY, obj=2.0)
    m.add_constraint("pack", {"x": 1.0, "y": 1.0}, "<=", 1.0)
    compiled = compile_lp(m)
    assert compiled.solve().objective == pytest.approx(3.0)
    pinned = compiled.solve({"x": (0.0, 0.0)})
    assert pinned.objective == pytest.approx(2.0)
    # overrides do not stick
    assert compiled.solve().objective == pytest.approx(3.0)
    infeasible = compiled.solve({"x": (1.0, 1.0), "y": (1.0, 1.0)})
    assert infeasible.status == backend.INFEASIBLE
    assert compiled.solve().objective == pytest.approx(3.0)


def test_compiled_lp_objective_override(engine):
    m = Model()
    m.add_variable("x", CONTINUOUS, lb=0.0, ub=1.0, obj=1.0)
    compiled = compile_lp(m)
    assert compiled.solve().objective == pytest.approx(1.0)
    assert compiled.solve(objective={"x": 5.0}).objective == pytest.approx(5.0)
    assert compiled.solve().objective == pytest.approx(1.0)


def test_compiled_mip_objective_swap(engine):
    m = Model()
    m.add_variable("x", BINARY, obj=1.0)
    m.add_variable("y", BINARY, obj=2.0)
    m.add_constraint("pack", {"x": 1.0, "y": 1.0}, "<=", 1.0)
    compiled = backend.compile_mip(m)
    assert compiled.solve().objective == pytest.approx(2.0)
    swapped = compiled.solve({"x": 7.0, "y": 2.0})
    assert swapped.objective == pytest.approx(7.0)
    assert swapped.values["x"] == pytest.approx(1.0)


def test_engines_agree_on_duals():
    if not backend.native_engine_active():
        pytest.skip("native engine unavailable")
    m = Model()
    m.add_variable("x", CONTINUOUS, lb=0.0, obj=4.0)
    m.add_variable("y", CONTINUOUS, lb=0.0, obj=3.0)
    m.add_constraint("a", {"x": 2.0, "y": 1.0}, "<=", 10.0)
    m.add_constraint("b", {"x": 1.0, "y": 3.0}, "<=", 15.0)
    m.add_constraint("c", {"x": 1.0}, ">=", 1.0)
    native = solve_lp(m)
    saved = backend._core
    try:
        backend._core = None
        fallback = solve_lp(m)
    finally:
        backend._core = saved
    assert native.objective == pytest.approx(fallback.objective, abs=1e-9)
    for key in ("a", "b", "c"):
        assert native.duals[key] == pytest.approx(fallback.duals[key], abs=1e-7)


def test_model_validation():
    m = Model()
    m.add_variable("x", BINARY)
    with pytest.raises(BackendError):
        m.add_variable("x", BINARY)
    with pytest.raises(BackendError):
        m.add_constraint("c", {"missing": 1.0}, "<=", 1.0)
    with pytest.raises(BackendError):
        m.add_constraint("c", {"x": 1.0}, "<>", 1.0)
    with pytest.raises(BackendError):
        m.add_variable("z", CONTINUOUS, lb=2.0, ub=1.0)


def test_require_backend():
    assert require_backend("highs") == "highs"
    with pytest.raises(BackendError):
        require_backend("glop")


def test_write_lp(tmp_path):
    m = Model()
    m.add_variable("x", BINARY, obj=1.0)
    m.add_constraint("cap", {"x": 1.0}, "<=", 1.0)
    path = tmp_path / "model.lp"
    write_lp(m, str(path))
    text = path.read_text()
    assert "Maximize" in text and "Binary" in text
