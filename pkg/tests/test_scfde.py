import numpy as np
import pytest

from flexwave.channel import ChannelRealization, noise_from_ebn0, sample_channel, tdl_a
from flexwave.errors import ShapeError
from flexwave.link import basis_papr, linear_link_ber, ofdm_link_ber, scfde_papr
from flexwave.modem import qam, random_bits
from flexwave.scfde import rrc_taps, scfde_reference, scfde_transmit
from flexwave.transceiver import FrameConfig, idft_matrix


class TestRrc:
    def test_symmetric_unit_energy(self):
        g = rrc_taps()
        assert len(g) == 17
        np.testing.assert_allclose(g, g[::-1], atol=1e-15)
        assert np.sum(g**2) == pytest.approx(1.0)

    def test_nyquist_after_matching(self):
        # raised cosine = rrc * rrc has zeros at nonzero symbol instants
        g = rrc_taps(span=32)
        rc = np.convolve(g, g[::-1])
        centre = len(rc) // 2
        others = rc[centre + 2::2][:8]
        assert np.max(np.abs(others)) < 0.01 * rc[centre]


class TestReference:
    @pytest.mark.parametrize("taps", [np.array([1.0 + 0j]),
                                      np.array([0.8, 0.0, 0.5j, -0.3]) / np.sqrt(0.98)])
    def test_noiseless_is_error_free(self, rng, taps):
        cfg = FrameConfig(32, 8, blocks=20)
        c = qam(4)
        bits = random_bits(rng, (640, 4))
        h = ChannelRealization(taps, 0.0, 1e6)
        bits_hat, papr = scfde_reference(bits, cfg, h, 0.0, rng, c)
        np.testing.assert_array_equal(bits_hat, bits)
        assert papr.shape == (20,) and np.all(papr >= 1)

    def test_shape_check(self):
        with pytest.raises(ShapeError):
            scfde_transmit(np.ones(10), FrameConfig(8, 2))

    def test_lower_papr_than_ofdm(self):
        c = qam(4)
        cfg = FrameConfig(32, 8)
        sc = scfde_papr(cfg, 20_000, np.random.default_rng(1), c).quantile_db(1e-2)
        of = basis_papr(idft_matrix(32), 20_000, np.random.default_rng(1), c).quantile_db(1e-2)
        assert sc < of


class TestLinks:
    def test_ofdm_and_identity_agree_on_flat_channel(self):
        # any unitary basis is equivalent on a flat channel
        c, cfg = qam(4), FrameConfig(32, 8, blocks=200)
        h = ChannelRealization.identity()
        N0 = noise_from_ebn0(8.0, 4).N0
        a = ofdm_link_ber(h, cfg, N0, np.random.default_rng(3), c)
        b = linear_link_ber(np.eye(32), np.ones(32), h, cfg, N0, np.random.default_rng(3), c)
        assert abs(a.ber - b.ber) < 4 * np.hypot(a.std_error(), b.std_error())

    def test_ofdm_noiseless_selective(self):
        c, cfg = qam(4), FrameConfig(32, 8, blocks=10)
        h = sample_channel(tdl_a(), 500e-9, 1e6, np.random.default_rng(4), max_len=9)
        s = ofdm_link_ber(h, cfg, 1e-9, np.random.default_rng(5), c)
        assert s.bit_errors == 0 and s.bits_total == 1280
