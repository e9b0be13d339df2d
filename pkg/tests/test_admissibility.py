import itertools

import numpy as np
import pytest

from lbconfine import potential as P
from lbconfine.admissibility import (ADMISSIBLE, INCONCLUSIVE, NOT_ADMISSIBLE, Status, Thresholds,
                                     admissibility_report, check_condition_i, check_condition_ii,
                                     check_condition_iii, condition_ii_family, extended_family,
                                     gram_independence)
from lbconfine.quadrature import spectral_constants

S3 = list(Status)


def test_status_algebra_is_kleene():
    order = {Status.FAIL: 0, Status.INCONCLUSIVE: 1, Status.PASS: 2}
    for a, b in itertools.product(S3, S3):
        assert order[a & b] == min(order[a], order[b])
        assert order[a | b] == max(order[a], order[b])


def test_family_labels():
    phi = P.phi3(2)
    labels = [m.label for m in extended_family(phi)]
    assert labels[:4] == ["1", "x1", "x2", "|x|^2"]
    assert "2phi+x.grad(phi)" == labels[-1]
    assert "x1d2phi-x2d1phi" in labels
    assert "x1d2phi-x2d1phi" not in [m.label for m in extended_family(P.phi1(2))]


def test_condition_i_fails_for_non_even_pair():
    # S_phi itself only contains pairs of evenness for these forms, so supply a pair explicitly
    phi = P.phi3(2)
    S = P.AngularPairSet(2, frozenset({(0, 1), (1, 0)}))
    res = check_condition_i(phi, S)
    assert res.status is Status.FAIL
    assert res.evidence["offending_pair"] == [1, 2]
    assert check_condition_i(P.phi1(2)).status is Status.PASS


def test_condition_ii_fails_for_harmonic():
    # d_i phi = x_i for the harmonic potential
    res = check_condition_ii(P.harmonic(2))
    assert res.status is Status.FAIL
    assert res.evidence["independence"]["method"] == "exact-monomial-rank"


def test_gram_thresholds():
    phi = P.phi1(2)
    members = condition_ii_family(phi)
    pts = np.random.default_rng(0).uniform(-3, 3, size=(500, 2))
    ok = gram_independence(members, pts)
    assert ok.status is Status.PASS
    strict = gram_independence(members, pts, Thresholds(gram_dependent=1e-9, gram_independent=10.0))
    assert strict.status is Status.INCONCLUSIVE
    # duplicate a member: exactly dependent
    dup = gram_independence(members + members[:1], pts)
    assert dup.status is Status.FAIL and dup.nullspace


def test_harmonic_even_branch_constant(presets):
    phi = presets["harmonic"]
    res = check_condition_iii(phi, spectral_constants(phi))
    assert res.status is Status.FAIL
    assert res.evidence["relative_spread"] < 1e-6


@pytest.mark.parametrize("name,expected", [("harmonic", NOT_ADMISSIBLE), ("phi1", ADMISSIBLE),
                                           ("quartic", ADMISSIBLE), ("phi3", ADMISSIBLE),
                                           ("phi2", ADMISSIBLE)])
def test_verdicts(presets, name, expected):
    assert admissibility_report(presets[name]).verdict == expected


def test_phi3_uses_second_limit(presets):
    rep = admissibility_report(presets["phi3"])
    assert rep.cond_iii.evidence["branch"] == "limit-2"


def test_phi2_with_unit_quadratic_exponent_is_not_admissible():
    # alpha_2 = 2 makes d_2 phi proportional to x_2
    phi = P.normalize(P.phi2(2, alphas=[1.0, 2.0]))
    assert admissibility_report(phi).verdict in (NOT_ADMISSIBLE, INCONCLUSIVE)


def test_report_is_jsonable(presets):
    import json
    json.dumps(admissibility_report(presets["phi1"]).to_dict())
