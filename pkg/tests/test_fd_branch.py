import numpy as np
import pytest

from foss import helix, spectral, tensor as tt
from foss.fd_branch import FDBranch, FDBranchConfig
from foss.tensor import Tensor, grad_check


def make_branch(l=9, c=2, seed=0, **flags):
    cfg = FDBranchConfig(d_model=c, seq_len=l, ssm_state=4, ssm_hidden=4, **flags)
    return FDBranch("fd", cfg, np.random.default_rng(seed))


def scripted_coarse2fine(branch, f_l):
    """Straight-line oracle for the spatial path with the same frozen weights."""
    c = branch.config.d_model
    spec = spectral.dft_forward(Tensor(f_l))
    pol = spectral.to_polar(spec)
    amp = helix.apply(branch.perm, pol.amplitude)
    phase = helix.apply(branch.perm, pol.phase)
    z = tt.concat([amp, phase], axis=-1)
    z = tt.silu(tt.conv1d(z, branch.joint_stack.kernel, mode="depthwise"))
    z = branch.joint_stack.ssm.scan(z)
    z = branch.joint_stack.norm(z)
    amp = helix.invert_apply(branch.perm, tt.narrow(z, -1, 0, c))
    phase = helix.invert_apply(branch.perm, tt.narrow(z, -1, c, c))
    rec = spectral.from_polar(spectral.PolarSpectrum(amp, phase))
    out = spectral.dft_inverse(rec, check_symmetry=False)
    return (out * tt.silu(Tensor(f_l))).data


class TestCoarse2Fine:
    def test_zero_input_is_annihilated(self):
        branch = make_branch()
        out = branch.coarse2fine(Tensor(np.zeros((1, 9, 2))))
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_identity_processing_reduces_to_gated_roundtrip(self):
        branch = make_branch(identity_fourier_ssm=True)
        rng = np.random.default_rng(1)
        f_l = rng.normal(size=(1, 9, 2))
        out = branch.coarse2fine(Tensor(f_l)).data
        s = f_l / (1.0 + np.exp(-f_l))
        assert np.allclose(out, f_l * s, atol=1e-8)

    def test_matches_scripted_composition_oracle(self):
        branch = make_branch(seed=2)
        rng = np.random.default_rng(3)
        f_l = rng.normal(size=(1, 9, 2))
        got = branch.coarse2fine(Tensor(f_l)).data
        assert np.allclose(got, scripted_coarse2fine(branch, f_l), atol=1e-12)


class TestSpecEvolve:
    def test_zero_input_gives_zero(self):
        branch = make_branch()
        out = branch.specevolve(Tensor(np.zeros((1, 8, 2))))
        assert np.allclose(out.data, 0.0, atol=1e-12)

    def test_bypass_reduces_to_gated_roundtrip(self):
        branch = make_branch(l=8, c=8, prose_channel_scan=True)
        rng = np.random.default_rng(4)
        f_l = rng.normal(size=(1, 8, 8))
        out = branch.specevolve(Tensor(f_l)).data
        f_g = f_l.mean(axis=-2)
        gate = f_g * (f_g / (1.0 + np.exp(-f_g)))
        assert np.allclose(out, gate[:, None, :] * f_l, atol=1e-8)

    def test_matches_scripted_composition_oracle(self):
        branch = make_branch(l=8, c=8, seed=5)
        rng = np.random.default_rng(6)
        f_l = rng.normal(size=(1, 8, 8))
        got = branch.specevolve(Tensor(f_l)).data

        f_g = Tensor(f_l.mean(axis=-2).reshape(1, 8, 1))
        spec = spectral.dft_forward(f_g)
        scan = helix.channel_scan_order(spec)
        pol = spectral.to_polar(spec)
        amp = helix.apply_channel_order(scan, pol.amplitude)
        phase = helix.apply_channel_order(scan, pol.phase)
        z = branch.channel_ssm.scan(tt.concat([amp, phase], axis=-1))
        amp = helix.invert_channel_order(scan, tt.narrow(z, -1, 0, 1))
        phase = helix.invert_channel_order(scan, tt.narrow(z, -1, 1, 1))
        rec = spectral.from_polar(spectral.PolarSpectrum(amp, phase))
        processed = spectral.dft_inverse(rec, check_symmetry=False).data.reshape(1, 1, 8)
        fg = f_l.mean(axis=-2)[:, None, :]
        want = processed * (fg / (1.0 + np.exp(-fg))) * f_l
        assert np.allclose(got, want, atol=1e-12)


class TestForward:
    def test_shape_preservation(self):
        for l, c in ((9, 2), (8, 8), (5, 3)):
            branch = make_branch(l=l, c=c)
            rng = np.random.default_rng(7)
            out = branch(Tensor(rng.normal(size=(2, l, c))))
            assert out.shape == (2, l, c)
            single = branch(Tensor(rng.normal(size=(l, c))))
            assert single.shape == (l, c)

    def test_selector_projections(self):
        branch = make_branch(l=6, c=3, seed=8)
        rng = np.random.default_rng(9)
        x = Tensor(rng.normal(size=(1, 6, 3)))
        feats = branch.forward(x)
        branch.proj.b.data[:] = 0.0
        branch.proj.w.data[:] = np.vstack([np.eye(3), np.zeros((3, 3))])
        assert np.allclose(branch(x).data, feats.spatial.data, atol=1e-12)
        branch.proj.w.data[:] = np.vstack([np.zeros((3, 3)), np.eye(3)])
        assert np.allclose(branch(x).data, feats.enhanced.data, atol=1e-12)

    def test_identity_helix_changes_path_not_shapes(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(1, 9, 2))
        full = make_branch(seed=11)
        ablated = make_branch(seed=11, identity_helix=True)
        a, b = full(Tensor(x)), ablated(Tensor(x))
        assert a.shape == b.shape
        assert not np.allclose(a.data, b.data)

    def test_full_branch_gradients(self):
        branch = make_branch(l=9, c=2, seed=12)
        rng = np.random.default_rng(13)
        # Move off the init point: gamma=1/beta=0 puts the channel spectrum's
        # DC amplitude exactly on the |.| kink, where gradients are undefined.
        for p in branch.params():
            p.data += 0.05 * rng.normal(size=p.data.shape)
        x = rng.normal(size=(1, 9, 2))
        w = rng.normal(size=(1, 9, 2))

        def fn():
            return tt.tsum(branch(Tensor(x)) * Tensor(w))

        err = grad_check(fn, branch.params(), rng=np.random.default_rng(0), max_coords=6)
        assert err < 1e-4
