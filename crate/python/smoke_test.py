"""Smoke test for the pycpmgz extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pycpmgz-*.whl
"""

import math

import pycpmgz


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    r = pycpmgz.site_response(54.8, 45.0)
    assert close(r["delta_per_tesla"] / 1e6, 15.3, 0.01), r
    assert close(r["rabi_per_tesla"] / 1e6, 101.0, 0.02), r

    z = pycpmgz.find_partial_zefoz(phi_deg=45.0)
    assert z["status"] == "converged", z
    assert abs(math.degrees(z["theta_star"]) - 54.8) < 0.2, z

    ou = pycpmgz.OuParams.paper()
    assert close(ou.t2_cpmg(150e-6), 18.7e-3, 0.03)
    assert close(ou.t2_cpmg(3e-6), 43.0, 0.05)
    assert close(ou.gamma_cpmg(1, 1e-3), ou.gamma_spin_echo(1e-3), 1e-12)

    mc = ou.mc_cpmg(2, 172e-6, trials=20_000, seed=1)
    want = ou.coherence_cpmg(2, 172e-6)
    assert abs(mc["mean_re"] - want) < 4 * mc["stderr"], (mc, want)

    times = [50e-6 * (40 ** (i / 11)) for i in range(12)]
    t, rho = pycpmgz.synth_spin_echo(ou, times, amplitude=0.9)
    fit = pycpmgz.fit_spin_echo(t, rho)[0]
    assert fit["converged"], fit
    assert close(fit["sigma"]["value"], 2.3e3, 1e-4), fit
    assert close(fit["tau_c"]["value"], 172e-6, 1e-4), fit

    lines = pycpmgz.holeburn_positions(15.1e6, 0.0)
    assert [l["offset"] for l in lines] == [-15.1e6, 0.0, 15.1e6]

    assert close(pycpmgz.intensity_to_coherence(0.5, 0.7, 1.0), 0.5146, 1e-3)

    gamma = pycpmgz.broadening(0.3, samples=20_000, seed=1)
    print(f"broadening at 0.3 deg: {gamma / 1e3:.1f} kHz")

    try:
        pycpmgz.OuParams(-1.0, 1e-4)
    except ValueError as e:
        assert "sigma" in str(e)
    else:
        raise AssertionError("negative sigma accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
