import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nnpspline.bspline import make_uniform_knots
from nnpspline.exceptions import DataError, DomainError
from nnpspline.generators import FAMILIES, GeneratorSpec, density, generate
from nnpspline.io import ModelFile, build_timestamp, format_number, load_csv, save_csv


class TestDensity:
    def test_poisson_at_mean(self):
        ref = math.exp(20 * math.log(20) - 20 - math.lgamma(21))
        assert density("poisson_pmf", 20.0) == pytest.approx(ref, rel=1e-13)
        assert density("poisson_pmf", 20.0) == pytest.approx(0.08883, abs=1e-5)

    def test_pareto_at_b(self):
        assert density("pareto_pdf", 1.0) == pytest.approx(1.0, rel=1e-14)

    def test_weibull_left_of_zero(self):
        assert density("weibull_pdf", -1e-12) == 0.0

    @pytest.mark.parametrize("x", [0.5, 2.0, 7.0])
    def test_gamma_closed_form(self, x):
        ref = x * math.exp(-x / 2) / (math.gamma(2) * 2**2)
        assert density("gamma_pdf", x) == pytest.approx(ref, rel=1e-13)

    @pytest.mark.parametrize("x", [0.0, 0.5, 3.0])
    def test_weibull_closed_form(self, x):
        assert density("weibull_pdf", x) == pytest.approx(math.exp(-x / 1.5) / 1.5, rel=1e-13)

    @pytest.mark.parametrize("x", [1.0, 2.0, 5.0])
    def test_pareto_closed_form(self, x):
        assert density("pareto_pdf", x) == pytest.approx(1.0 / x**2, rel=1e-13)

    def test_poisson_negative(self):
        assert density("poisson_pmf", -0.5) == 0.0

    def test_param_override(self):
        ref = math.exp(3 * math.log(4) - 4 - math.lgamma(4))
        assert density("poisson_pmf", 3.0, mean=4) == pytest.approx(ref, rel=1e-13)

    @pytest.mark.parametrize(
        "family,params", [("nope", {}), ("gamma_pdf", {"alpha": -1}), ("gamma_pdf", {"mean": 1}), ("weibull_pdf", {"beta": math.inf})]
    )
    def test_invalid(self, family, params):
        with pytest.raises(DomainError):
            density(family, 1.0, **params)


class TestGenerate:
    def test_seeded(self):
        spec = GeneratorSpec.on_range("gamma_pdf", 0, 10, 50, noise=0.1, seed=7)
        x1, y1 = generate(spec)
        x2, y2 = generate(spec)
        np.testing.assert_array_equal(y1, y2)

    def test_noise_free(self):
        for fam in FAMILIES:
            lo = 1.0 if fam == "pareto_pdf" else 0.0
            x, y = generate(GeneratorSpec.on_range(fam, lo, 10, 21))
            np.testing.assert_array_equal(y, density(fam, x))

    def test_count_zero(self):
        x, y = generate(GeneratorSpec.on_range("gamma_pdf", 0, 1, 0))
        assert x.size == 0 and y.size == 0

    def test_pareto_support(self):
        with pytest.raises(DomainError):
            GeneratorSpec.on_range("pareto_pdf", 0, 2, 5)

    def test_negative_noise(self):
        with pytest.raises(DomainError):
            GeneratorSpec.on_range("gamma_pdf", 0, 1, 5, noise=-1)

    def test_bad_range(self):
        with pytest.raises(DomainError):
            GeneratorSpec.on_range("gamma_pdf", 2, 1, 5)


class TestCsv:
    def test_parse(self):
        x, y = load_csv(io.StringIO("x,y\n0,1\n1,2"))
        np.testing.assert_array_equal(x, [0, 1])
        np.testing.assert_array_equal(y, [1, 2])

    def test_header_only(self):
        with pytest.raises(DataError, match="no samples"):
            load_csv(io.StringIO("x,y\n"))

    def test_empty(self):
        with pytest.raises(DataError):
            load_csv(io.StringIO(""))

    def test_bad_header(self):
        with pytest.raises(DataError, match="line 1"):
            load_csv(io.StringIO("a,b\n1,2\n"))

    @pytest.mark.parametrize("body,line", [("1,2\n3\n", 3), ("1,2\n3,4\nq,1\n", 4), ("1,nan\n", 2), ("1,2,3\n", 2)])
    def test_malformed_row(self, body, line):
        with pytest.raises(DataError, match=f"line {line}"):
            load_csv(io.StringIO("x,y\n" + body))

    def test_duplicates_kept(self):
        x, _ = load_csv(io.StringIO("x,y\n1,2\n1,3\n"))
        assert x.tolist() == [1.0, 1.0]

    def test_roundtrip(self, tmp_path):
        x, y = generate(GeneratorSpec.on_range("poisson_pmf", 0, 40, 33, noise=0.01, seed=3))
        path = tmp_path / "d.csv"
        save_csv(path, x, y)
        x2, y2 = load_csv(path)
        np.testing.assert_array_equal(x2, x)
        np.testing.assert_array_equal(y2, y)
        assert b"\r" not in path.read_bytes()

    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
    def test_roundtrip_exact(self, vals):
        buf = io.StringIO()
        save_csv(buf, vals, vals[::-1])
        x, y = load_csv(io.StringIO(buf.getvalue()))
        assert x.tolist() == [float(v) for v in vals]
        assert y.tolist() == [float(v) for v in vals[::-1]]


def sample_model(rng, **kw):
    kv = make_uniform_knots(0.0, 3.0, 4)
    fields = dict(
        knots=kv.knots,
        alpha=rng.standard_normal(kv.n_basis),
        lam=0.1,
        n_interior=4,
        x_range=(0.0, 3.0),
        selection={"asr": 0.25, "gcv": 0.3, "aic": -math.inf, "status": "optimal", "polished": True},
        provenance={"input": "d.csv", "grid": {"lambdas": [0.1, 1.0], "knot_counts": [4]}, "tol": 1e-9},
    )
    fields.update(kw)
    return ModelFile(**fields)


class TestModelFile:
    def test_byte_stable(self, rng, tmp_path):
        mf = sample_model(rng)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        mf.save(p1)
        ModelFile.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_exact_numbers(self, rng):
        mf = sample_model(rng)
        back = ModelFile.loads(mf.dumps())
        np.testing.assert_array_equal(back.alpha, mf.alpha)
        np.testing.assert_array_equal(back.knots, mf.knots)
        assert back.lam == mf.lam
        assert back.selection["aic"] == -math.inf
        assert back.selection["polished"] is True

    def test_field_order(self, rng):
        text = sample_model(rng).dumps()
        keys = ["schema", "version", "order", "n_interior", "x_range", "lambda", "knots", "alpha", "selection", "provenance"]
        pos = [text.index(f'"{k}"') for k in keys]
        assert pos == sorted(pos)

    def test_spline(self, rng):
        mf = sample_model(rng)
        assert mf.spline()(0.0) == pytest.approx(mf.alpha[0], rel=1e-14)

    def test_inconsistent(self, rng):
        with pytest.raises(ValueError):
            sample_model(rng, alpha=np.ones(3))

    def test_unknown_field(self, rng):
        with pytest.raises(ValueError):
            sample_model(rng, selection={"bogus": 1})

    @pytest.mark.parametrize("text", ["", "{", '{"schema": "other"}', '{"schema": "nnpspline-model", "version": 1}'])
    def test_bad_files(self, text):
        with pytest.raises(DataError):
            ModelFile.loads(text)

    def test_timestamp(self, monkeypatch):
        monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
        assert build_timestamp() is None
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        assert build_timestamp() == "1970-01-01T00:00:00Z"
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "soon")
        with pytest.raises(DataError):
            build_timestamp()


@pytest.mark.parametrize("v,text", [(1.0, "1"), (0.1, "0.10000000000000001"), (3, "3"), (math.nan, "nan"), (-math.inf, "-inf")])
def test_format_number(v, text):
    assert format_number(v) == text
