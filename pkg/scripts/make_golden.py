"""Regenerate the golden artifacts under tests/golden/.

Run from anywhere; paths are anchored at the repository root. The goldens
pin the serialized container bytes, one classified input, its expected
probabilities, and the validator report text. Regenerate only when the
container format or the toy trainer deliberately changes, and review the
diff before committing.
"""
import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from rlpm.graph import forward
from rlpm.imageio import write_raw32
from rlpm.modelio import save, validate
from rlpm.toydata import make_blob_dataset
from rlpm.toynets import build_conv_classifier
from rlpm.train import train_toy

GOLDEN = pathlib.Path(__file__).resolve().parents[1] / "tests" / "golden"


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    data = make_blob_dataset(80, seed=3)
    net = build_conv_classifier((16, 16, 1), 2, rng=np.random.default_rng(2),
                                name="golden-blob")
    net = train_toy(net, data, 8, 0.05, seed=2)

    base = GOLDEN / "blob_classifier"
    save(net, base)

    image = data[0][0]
    write_raw32(GOLDEN / "input.raw32", image)
    probs = forward(net, image)
    (GOLDEN / "output.json").write_text(
        json.dumps({"input": "input.raw32",
                    "probabilities": [float(p) for p in probs]},
                   indent=2) + "\n"
    )

    report = validate(base)
    (GOLDEN / "validate.txt").write_text(report.text)
    print(f"wrote goldens to {GOLDEN}")
    print(report.text)


if __name__ == "__main__":
    main()
