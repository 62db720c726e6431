import numpy as np
import pytest

from whiskertwin import defaults
from whiskertwin.experiment.fitting import REFERENCE_ANCHORS, AmplitudeAnchor, RangeAnchor, fit_default_params
from whiskertwin.localization import forward_amplitudes, operational_range


@pytest.fixture(scope="module")
def fitted():
    return fit_default_params(REFERENCE_ANCHORS, defaults.calibration(), defaults.underwater_chain())


def test_fit_reproduces_frozen_defaults(fitted):
    assert fitted.converged
    assert fitted.drag.linear_drag_gain == pytest.approx(defaults.DRAG_GAIN, rel=1e-6)
    assert fitted.drag.cross_coupling == pytest.approx(defaults.CROSS_COUPLING, rel=1e-6)
    assert fitted.params.floors[0] == pytest.approx(defaults.FLOOR_V, rel=1e-6)
    assert fitted.params.gains == pytest.approx(defaults.forward_params().gains, rel=1e-6)


def test_fit_hits_anchors(fitted):
    a = forward_amplitudes(fitted.params, 0.02, 0.0, "transverse")
    assert a[3] == pytest.approx(1.41, rel=0.15) and a[0] == pytest.approx(0.56, rel=0.15)
    assert a[3] / a[0] == pytest.approx(1.41 / 0.56, rel=0.15)
    assert 0.040 <= operational_range(fitted.params) <= 0.050
    assert max(abs(r) for r in fitted.residuals.values()) < 1e-8


def test_scaled_anchors_scale_gains(fitted):
    scaled = [AmplitudeAnchor(a.drive, a.L, a.T, a.channel, 2 * a.volts) if isinstance(a, AmplitudeAnchor) else a
              for a in REFERENCE_ANCHORS]
    f2 = fit_default_params(scaled, defaults.calibration(), defaults.underwater_chain())
    assert f2.params.gains == pytest.approx(2 * fitted.params.gains, rel=1e-6)
    assert f2.params.floors == pytest.approx(2 * fitted.params.floors, rel=1e-6)
    assert f2.drag.cross_coupling == pytest.approx(fitted.drag.cross_coupling, rel=1e-6)
    assert list(f2.residuals.values()) == pytest.approx(list(fitted.residuals.values()), abs=1e-8)


def test_config_fragment(fitted):
    frag = fitted.config_fragment()
    assert set(frag) == {"drag", "localization", "fit_residuals"}
    assert frag["drag"]["linear_drag_gain"] == fitted.drag.linear_drag_gain


def test_anchor_errors():
    with pytest.raises(ValueError, match="empty"):
        fit_default_params([])
    with pytest.raises(ValueError, match="amplitude anchor"):
        fit_default_params([RangeAnchor(0.045)])
