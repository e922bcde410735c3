import numpy as np
import pytest
from hypothesis import given, strategies as st

from xsep import arch as A
from xsep.errors import ConfigError, GeometryError, ParameterError, ShapeError
from xsep.model import build_model
from xsep.tensor import Rng

from conftest import rel_dev


def xception_oracle(num_classes=1000, fc=()):
    """Closed-form (trainable, non_trainable, macs) from widths and map sizes."""
    t = nt = macs = 0

    def bn(c):
        nonlocal t, nt
        t += 2 * c
        nt += 2 * c

    def conv(cin, cout, k, hw):
        nonlocal t, macs
        t += cin * cout * k * k
        macs += hw * hw * cin * cout * k * k
        bn(cout)

    def sep(cin, cout, hw):
        nonlocal t, macs
        t += cin * 9 + cin * cout
        macs += hw * hw * (cin * 9 + cin * cout)
        bn(cout)

    conv(3, 32, 3, 149)
    conv(32, 64, 3, 147)
    for cin, a, b, hw, out in ((64, 128, 128, 147, 74), (128, 256, 256, 74, 37),
                               (256, 728, 728, 37, 19)):
        sep(cin, a, hw)
        sep(a, b, hw)
        conv(cin, b, 1, out)
    for _ in range(24):
        sep(728, 728, 19)
    sep(728, 728, 19)
    sep(728, 1024, 19)
    conv(728, 1024, 1, 10)
    sep(1024, 1536, 10)
    sep(1536, 2048, 10)
    width = 2048
    for units in tuple(fc) + (num_classes,):
        t += width * units + units
        macs += width * units
        width = units
    return t, nt, macs


@pytest.fixture(scope="module")
def xception():
    return A.build_xception()


def test_xception_costs_match_closed_form(xception):
    c = A.report_costs(xception)
    t, nt, macs = xception_oracle()
    assert (c.trainable_params, c.non_trainable_params, c.macs_per_example) == (t, nt, macs)
    assert (t, nt, macs) == (22855952, 54528, 8357403496)
    assert c.total_params == 22910480


def test_xception_structure(xception):
    s = A.structure(xception)
    assert (s.conv_layers, s.modules, s.residual_connections, s.projection_shortcuts) == (36, 14, 12, 4)
    shapes = A.infer_shapes(xception)
    gap = next(i for i, n in enumerate(xception.nodes) if n.kind == "gap")
    assert shapes[gap - 1] == (2048, 10, 10)
    assert shapes[-1] == (1000,)


def test_no_residual_variant(xception):
    proj = A.projection_shortcut_params(xception)
    # four 1x1 projections, each with a batch norm
    assert proj == 64 * 128 + 128 * 256 + 256 * 728 + 728 * 1024 + 2 * (128 + 256 + 728 + 1024)
    plain = A.build_xception(residuals=False)
    assert A.report_costs(plain).trainable_params == 22855952 - proj == 21878880
    assert A.structure(plain).residual_connections == 0
    assert A.strip_residuals(xception).to_text() == plain.to_text()


def test_fc_head():
    spec = A.build_xception(fc_layers=(4096, 4096))
    t, _, macs = xception_oracle(fc=(4096, 4096))
    c = A.report_costs(spec)
    assert c.trainable_params == t == 50077968
    assert c.macs_per_example == macs


def test_toy_preset_numbers():
    c = A.report_costs(A.toy_xception())
    assert (c.trainable_params, c.macs_per_example) == (722576, 3294136)
    assert A.toy_xception().input_shape == (3, 32, 32)


def test_single_conv_bn():
    spec = A.loads("0 input shape=3,8,8\n1 conv in=3 filters=32 kernel=3 stride=1 padding=same\n"
                   "2 bn channels=32\n")
    c = A.report_costs(spec)
    assert (c.trainable_params, c.non_trainable_params) == (3 * 32 * 9 + 64, 64) == (928, 64)


def test_archspec_round_trip(tmp_path, xception):
    text = xception.to_text()
    again = A.loads(text)
    assert again.to_text() == text
    path = tmp_path / "x.arch"
    A.save(xception, path)
    assert A.load(path).to_text() == text
    assert A.report_costs(again) == A.report_costs(xception)


@pytest.mark.parametrize("text, exc", [
    ("0 input shape=3,8,8\n2 relu\n", ConfigError),
    ("0 input shape=3,8,8\n1 relu extra\n", ConfigError),
    ("0 input shape=3,8,8\n1 residual\n2 relu\n", ShapeError),
    ("0 input shape=3,8,8\n1 end\n", ShapeError),
    ("0 input shape=3,8,8\n1 conv in=4 filters=2 kernel=1 stride=1 padding=same\n", ShapeError),
    ("0 input shape=3,8,8\n1 blorp\n", ShapeError),
    ("0 relu\n", ShapeError),
    ("0 input shape=3,2,2\n1 conv in=3 filters=2 kernel=3 stride=1 padding=valid\n", GeometryError),
])
def test_corrupted_spec_rejected(text, exc):
    with pytest.raises(exc):
        A.validate(A.loads(text))


def test_sepconv_vgg_closed_form():
    widths = [32, 64, 128, 256]
    t = nt = 0
    cin = 3
    for c in widths:
        t += cin * 9 + cin * c + 2 * c
        nt += 2 * c
        cin = c
    t += 256 * 10 + 10
    c = A.report_costs(A.build_sepconv_vgg(widths))
    assert (c.trainable_params, c.non_trainable_params) == (t, nt)
    with pytest.raises(ParameterError):
        A.build_sepconv_vgg([])
    with pytest.raises(GeometryError):
        A.build_sepconv_vgg([4] * 8, input_shape=(3, 4, 4), pool_every=1)


def test_build_named():
    assert A.build_named("xception").to_text() == A.build_xception().to_text()
    assert A.build_named("toy_xception", 5).num_classes == 5
    assert A.build_named("sepconv_vgg", 4, task="multi-label").task == "multi-label"
    with pytest.raises(ConfigError):
        A.build_named("resnet")
    with pytest.raises(ParameterError):
        A.build_xception(intermediate_activation="tanh")


def test_intermediate_activation_marks_every_sepconv():
    spec = A.toy_xception(intermediate_activation="elu")
    seps = [n for n in spec.nodes if n.kind == "sepconv"]
    assert seps and all(n["act"] == "elu" for n in seps)


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(3, 8))
def test_extreme_inception_equals_spectrum_at_g_equals_m(seed, m_in, m):
    # same pointwise weights and per-channel spatial filters
    extreme = build_model(A.build_extreme_inception(m_in, m, hw=6), seed, np.float64)
    spectrum = build_model(A.build_spectrum_module(m_in, m, m, hw=6), seed + 1, np.float64)
    spectrum.store[A.param_name(1, "kernel")] = extreme.store[A.param_name(1, "kernel")].copy()
    dw = extreme.store[A.param_name(2, "depthwise")]
    for g in range(m):
        spectrum.store[A.param_name(2, f"kernel{g}")] = dw[:, g:g + 1].copy()
    x = Rng(seed).normal((2, m_in, 6, 6))
    assert rel_dev(extreme.forward(x), spectrum.forward(x)) < 1e-12


def test_zero_weights_give_zero_output():
    spec = A.toy_xception(num_classes=4, input_hw=16, dropout=0.0)
    model = build_model(spec, 0, np.float64)
    for name in model.store.trainable_names():
        model.store[name] = np.zeros_like(model.store[name])
    out = model.forward(Rng(1).normal((2, 3, 16, 16)))
    assert not out.any()


def test_reformulation_reproduces_towers():
    spec = A.build_simplified_inception(5, [2, 3, 4], hw=7, kernel=3, activation=True)
    model = build_model(spec, 3, np.float64)
    spec2, store2 = A.reformulate_inception(spec, model.store)
    assert [n.kind for n in spec2.nodes] == ["input", "conv", "relu", "groupconv", "relu"]
    from xsep.model import Model
    x = Rng(4).normal((2, 5, 7, 7))
    assert rel_dev(model.forward(x), Model(spec2, store2).forward(x)) < 1e-12


def test_spectrum_segment_validation():
    with pytest.raises(ParameterError):
        A.build_spectrum_module(4, 6, 4)
    with pytest.raises(ParameterError):
        A.build_simplified_inception(3, [])
