from math import comb

import numpy as np
import pytest

from spintorus.fusion import (
    FusionRankError,
    TransferFamily,
    build_projector,
    build_su3_projector_oracle,
    check_top_fusion_scalar,
    degenerate_product,
    fused_transfer_dense,
    quantum_determinant,
    su3_printed_vectors,
    verify_fusion_ladder,
)
from spintorus.linalg import column_space_basis, max_abs, subspace_distance
from spintorus.model import ModelSpec


@pytest.mark.parametrize("n,m", [(2, 2), (3, 2), (3, 3), (4, 2), (4, 3), (4, 4)])
def test_projector_rank_and_idempotence(n, m):
    spec = ModelSpec(n, 1, 0.41 + 0.13j, [0.0])
    for rev in (False, True):
        P = build_projector(spec, m, reversed_order=rev)
        assert P.rank == comb(n, m)
        assert max_abs(P.operator @ P.operator - P.operator) < 1e-12
        assert max_abs(P.operator.dagger() - P.operator) < 1e-12


def test_projector_order_bounds():
    spec = ModelSpec(3, 1, 0.4, [0.0])
    with pytest.raises(ValueError):
        build_projector(spec, 4)
    with pytest.raises(FusionRankError):
        build_projector(spec, 2, rank_tolerance=1e-30)


@pytest.mark.parametrize("eta", [0.6, 0.35 + 0.25j])
def test_su3_printed_vectors(eta):
    # the printed span is the column space of the fusion (reversed) product,
    # equivalently the row space of R_12(-eta)
    spec = ModelSpec(3, 1, eta, [0.0])
    vecs2, vec3 = su3_printed_vectors(eta)
    assert subspace_distance(build_projector(spec, 2, reversed_order=True).basis, vecs2) < 1e-10
    assert subspace_distance(column_space_basis(degenerate_product(spec, 2).matrix.T), vecs2) < 1e-10
    P3 = build_projector(spec, 3, reversed_order=True)
    assert P3.rank == 1
    overlap = abs(np.vdot(P3.basis[:, 0], vec3)) / np.linalg.norm(vec3)
    assert abs(overlap - 1) < 1e-10


def test_su3_printed_normalization():
    # with the transpose bra, the printed normalisation makes sum |Phi><Phi| idempotent
    eta = 0.35 + 0.25j
    O2, O3 = build_su3_projector_oracle(eta)
    assert max_abs(O2.operator @ O2.operator - O2.operator) < 1e-12
    assert max_abs(O3.operator @ O3.operator - O3.operator) < 1e-12
    real = build_su3_projector_oracle(0.6)[0].operator
    spec = ModelSpec(3, 1, 0.6, [0.0])
    assert max_abs(real - build_projector(spec, 2, reversed_order=True).operator) < 1e-12


@pytest.mark.parametrize("n,N,m", [(3, 1, 2), (3, 2, 2), (3, 1, 3), (4, 1, 3), (2, 2, 2)])
def test_basis_contraction_matches_dense(n, N, m):
    spec = ModelSpec(n, N, 0.45 + 0.1j, list(np.linspace(-0.2, 0.3, N)))
    fam = TransferFamily(spec)
    u = 0.27 - 0.31j
    dense = fused_transfer_dense(spec, m, u)
    assert max_abs(fam(m, u) - dense) < 1e-11 * max(1.0, max_abs(dense))


@pytest.mark.parametrize("n,N", [(2, 2), (3, 2), (4, 1)])
def test_fusion_ladder(n, N):
    spec = ModelSpec(n, N, 0.52 + 0.17j, list(np.linspace(-0.3, 0.25, N)))
    report = verify_fusion_ladder(spec)
    assert report.max_relative() < 1e-9
    kinds = {e["identity"] for e in report.entries}
    assert "quantum_determinant" in kinds and "fusion_m1" in kinds
    assert check_top_fusion_scalar(spec, 0.3 + 0.4j) < 1e-9


def test_quantum_determinant_zeros():
    spec = ModelSpec(3, 2, 0.5, [0.1, -0.2])
    assert abs(quantum_determinant(spec, 0.1 - 0.5)) < 1e-14
    assert abs(quantum_determinant(spec, -0.2 + 2 * 0.5)) < 1e-14
    assert abs(quantum_determinant(spec, 0.33)) > 1e-3


def test_family_commutes():
    spec = ModelSpec(3, 2, 0.6, [0.1, -0.25])
    fam = TransferFamily(spec)
    mats = [fam(m, u) for m in (1, 2, 3) for u in (0.2 + 0.1j, -0.4 + 0.3j)]
    for a in mats:
        for b in mats:
            assert max_abs(a @ b - b @ a) < 1e-10
