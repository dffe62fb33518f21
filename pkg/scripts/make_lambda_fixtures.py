"""Freeze oracle values of the closed-form Lyapunov exponent.

The oracle is mpmath's tanh-sinh quadrature at 60 digits, split at every half
period of the oscillating factor. It shares nothing with the adaptive
Gauss-Kronrod main path except the integrand definition.

Run from the repository root::

    python scripts/make_lambda_fixtures.py
"""

import json
from pathlib import Path

import mpmath

from shelab.lyapunov import gk_lambda_oracle

Q_VALUES = (0.5, 1.0, 2.0, 4.0, 8.0)
DPS = 60
OUT = Path(__file__).resolve().parents[1] / "src" / "shelab" / "data" / "lambda_fixtures.json"


def main():
    values = {repr(q): gk_lambda_oracle(q, dps=DPS) for q in Q_VALUES}
    payload = {
        "schema_version": 1,
        "oracle": f"mpmath {mpmath.__version__} tanh-sinh, dps={DPS}, breakpoints every Q^2/2",
        "quantity": "lambda(Q), linear sigma(z) = Q z, torus of circumference 2",
        "values": values,
    }
    OUT.write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload, indent=2))


if __name__ == "__main__":
    main()
