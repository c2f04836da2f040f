"""Smoke test for the minmax_fem_py extension module.

Build and install first, for example:
    cd crates/python && maturin build --release -o dist && pip install dist/*.whl
"""

import math

import minmax_fem_py as mf

ALPHA = 1 / 137.035999084


def sommerfeld(z):
    a2 = (z * ALPHA) ** 2
    return -a2 / ALPHA**2 / (1 + math.sqrt(1 - a2))


def main():
    assert mf.transform_coefficients(2, "sinh") == [2]

    h = mf.solve(1.0, 0.0, 2.0, 2, 20.0, 4, p=6, mode="nonrelativistic")
    assert abs(h["energy"] + 0.5) < 1e-6, h

    d = mf.solve(1.0, 0.0, 2.0, 2, 20.0, 4, p=6)
    assert abs(d["energy"] - sommerfeld(1.0)) < 1e-8, d
    assert d["outer_iters"] <= 10

    r = mf.rung(1.0, 1.0, 2.0, 8, 40.0, 2, p=6)
    assert r["E_rel"] < r["E_nrel"] < 0, r
    assert abs(r["shift"] - (r["E_rel"] - r["E_nrel"])) < 1e-15

    ns = [100.0, 200.0, 400.0]
    es = [-1.0 + n**-3 for n in ns]
    e_inf, unc, q = mf.extrapolate(ns, es)
    assert abs(e_inf + 1.0) < 1e-12 and abs(q - 3.0) < 1e-6
    assert abs(mf.fit_order(ns, [n**-3 for n in ns], 0.0, 0.0) - 3.0) < 1e-9

    cfg = "Z1 = 1\nZ2 = 0\nR = 2\nnu = 2\nD_max = 20\nm = 2\np = 4\ncommand = solve\n"
    assert "D_max = 20" in mf.normalize_config(cfg)
    report = mf.run_config(cfg)
    assert report.startswith("m,Ne,N,mode,energy"), report

    try:
        mf.normalize_config(cfg.replace("nu = 2", "nu = 7"))
    except ValueError as e:
        assert "nu must be even" in str(e)
    else:
        raise AssertionError("odd nu accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
