"""Quick check that the extension imports and the main entry points work."""

import cmath
import math
import sys
import tempfile
from pathlib import Path

import polarmig


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    k = 50.0
    x, y = [0.0, 0.0, 0.0], [0.0, 0.3, 1.2]
    r = math.dist(x, y)
    g = polarmig.scalar_green(x, y, k)
    assert close(g, cmath.exp(1j * k * r) / (4 * math.pi * r))

    dyad = polarmig.dyadic_green(x, y, k)
    assert all(close(dyad[i][j], dyad[j][i]) for i in range(3) for j in range(3))

    psi = polarmig.coherency_from_stokes(2.0, 0.3, -0.4, 0.5)
    assert all(close(a, b) for a, b in zip(polarmig.stokes_from_coherency(psi), (2.0, 0.3, -0.4, 0.5)))

    try:
        polarmig.scalar_green(x, x, k)
    except ValueError:
        pass
    else:
        raise AssertionError("coincident points should raise")

    cfg = polarmig.Config.reference(5, 4)
    cfg.validate()
    again = polarmig.Config.from_json(cfg.to_json())
    assert again.to_json() == cfg.to_json()
    print(cfg.regime_report())

    data = polarmig.simulate(cfg)
    assert (data.receivers, data.freqs) == (25, 4)
    pre, regularized = polarmig.preprocess(data)
    assert pre.kind != data.kind and not regularized

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "pre.pmg"
        pre.write(str(path))
        back = polarmig.DataSet.read(str(path))
        assert back.matrix(3, 2) == pre.matrix(3, 2)

        point = cfg.scatterer_positions()[0]
        alpha = polarmig.recover(pre, point)
        assert len(alpha) == 2 and abs(alpha[0][0].imag) < 1e-9
        assert sum(abs(v) ** 2 for row in polarmig.image(pre, point) for v in row) > 0.0

        norms = polarmig.run_pipeline(cfg, str(Path(tmp) / "run"))
        assert len(norms) == 3 and all(n > 0.0 for n in norms)
        print("recovered norms:", ", ".join(f"{n:.3f}" for n in norms))

    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
