import numpy as np
import pytest

import noether_dt as nd
from noether_dt.errors import DomainError, ModelError
from noether_dt.expr import parse
from noether_dt.model import admissibility_residual, boundary_residual, dynamics_residual

from conftest import generating_rollout, bilinear_problem


def test_empty_horizon():
    with pytest.raises(ModelError, match="empty horizon"):
        nd.Horizon(0, 0)


def test_horizon_index_ranges():
    h = nd.Horizon(3, 4)
    assert list(h.control_times) == [3, 4, 5, 6]
    assert list(h.state_times) == [3, 4, 5, 6, 7]
    assert h.end == 7


def test_control_set_box():
    box = nd.ControlSet.box([-1.0, 0.0], [1.0, float("inf")])
    assert box.project([2.0, -3.0]) == [1.0, 0.0]
    assert box.contains([0.5, 10.0]) and not box.contains([1.5, 0.0])
    np.testing.assert_array_equal(box.default_point(2), [0.0, 0.0])
    with pytest.raises(ModelError):
        nd.ControlSet.box([1.0], [0.0])


def test_problem_validation():
    L, phi = parse("u1^2"), (parse("x1 + u1"),)
    with pytest.raises(ModelError, match="dynamics"):
        nd.ProblemSpec(nd.Horizon(0, 2), 1, 1, L, (), x_start=(0.0,))
    with pytest.raises(ModelError, match="x_start"):
        nd.ProblemSpec(nd.Horizon(0, 2), 1, 1, L, phi, x_start=(0.0, 1.0))
    with pytest.raises(ModelError, match="s1"):
        nd.ProblemSpec(nd.Horizon(0, 2), 1, 1, parse("u1*s1"), phi, x_start=(0.0,))
    with pytest.raises(ModelError, match="box"):
        nd.ProblemSpec(nd.Horizon(0, 2), 1, 1, L, phi, nd.ControlSet.box([0, 0], [1, 1]), (0.0,))


def test_end_flags():
    p = bilinear_problem()
    assert p.end_fixed and not p.end_free
    q = nd.ProblemSpec(p.horizon, 3, 2, p.lagrangian, p.dynamics, x_start=(1, 1, 0),
                       x_end=(None, 1.0, None))
    assert not q.end_fixed and not q.end_free


def test_rollout_and_cost():
    t = generating_rollout(4)
    p = bilinear_problem()
    np.testing.assert_array_equal(t.x[-1], [5.875, 3.4375, 6.90625])
    assert dynamics_residual(p, t) == 0.0
    assert boundary_residual(p, t) == 0.0
    assert admissibility_residual(p, t) == 0.0
    expected = sum(u[0] ** 2 - u[1] ** 2 for u in t.u)
    assert nd.cost(p, t) == pytest.approx(expected)


def test_rollout_domain_error_names_k():
    p = nd.ProblemSpec(nd.Horizon(0, 3), 1, 1, parse("u1^2"), (parse("ln(x1) + u1"),),
                       x_start=(1.0,))
    with pytest.raises(DomainError, match="k=1"):
        nd.rollout(p, [-1.0, 0.0, 0.0])


def test_trajectory_shapes():
    with pytest.raises(ModelError):
        nd.Trajectory(0, np.zeros((3, 1)), np.zeros((3, 1)))
    t = nd.Trajectory(2, np.arange(4.0).reshape(4, 1), np.zeros((3, 1)))
    assert t.N == 3 and t.x_at(5)[0] == 3.0
    with pytest.raises(IndexError):
        t.u_at(5)


def test_extremal_validation_and_scaling():
    t = nd.Trajectory(0, np.zeros((3, 1)), np.zeros((2, 1)))
    with pytest.raises(ModelError):
        nd.Extremal(t, 1.0, np.zeros((2, 1)))
    with pytest.raises(ModelError):
        nd.Extremal(t, -1.0, np.zeros((3, 1)))
    e = nd.Extremal(t, -1.0, [[1.0], [2.0]])
    assert e.is_normal and e.nontrivial
    assert e.psi_at(2)[0] == 2.0
    s = e.scaled(3.0)
    assert s.psi0 == -3.0 and s.psi_at(1)[0] == 3.0
    with pytest.raises(IndexError):
        e.psi_at(0)
    assert not nd.Extremal(t, 0.0, np.zeros((2, 1))).nontrivial


def test_symmetry_family_identity_requirement():
    nd.SymmetryFamily.identity(3, 2).check_identity()
    bad = nd.SymmetryFamily(1, (parse("x1 + 1"),), parse("0"), (parse("u1"),))
    with pytest.raises(ModelError, match="X\\(k,x,u,0\\)"):
        bad.check_identity()
    bad_u = nd.SymmetryFamily(1, (parse("x1"),), parse("0"), (parse("u1 + 1"),))
    with pytest.raises(ModelError, match="u\\(k,0\\)"):
        bad_u.check_identity()


def test_symmetry_family_vocabulary_and_dims():
    with pytest.raises(ModelError):
        nd.SymmetryFamily(1, (parse("x1 + s2"),), parse("0"), (parse("u1"),))
    fam = nd.SymmetryFamily(1, (parse("x1 + s1*u1"),), parse("0"), (parse("u1"),))
    assert fam.depends_on_controls
    with pytest.raises(ModelError):
        fam.validate_for(bilinear_problem())
