"""One-time generator for the frozen fixtures under fixtures/.

Run from the repository root. The outputs are committed and must not be
regenerated casually: tests treat them as golden files.
"""

import json
from pathlib import Path

import numpy as np

from ndvr import aggregation, feature_store

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def make_tiny_ndvf() -> None:
    rng = np.random.default_rng(20240811)
    fps = 4.0
    frames = []
    for i in range(5):
        frames.append(
            feature_store.FrameFeature(
                frame_index=i,
                timestamp=i / fps,
                fc_vector=rng.standard_normal(6).astype(np.float32),
                conv_vectors=(
                    rng.standard_normal(3).astype(np.float32),
                    np.abs(rng.standard_normal(4)).astype(np.float32),
                ),
            )
        )
    video = feature_store.VideoFeatures(video_id="tiny", fps=fps, frames=tuple(frames))
    n = feature_store.write_features(video, FIXTURES / "tiny.ndvf")
    print(f"tiny.ndvf: {n} bytes")


def make_mac_conformance() -> None:
    rng = np.random.default_rng(20240812)
    cases = []
    tensors = [
        np.arange(1 * 1 * 2, dtype=np.float64).reshape(1, 1, 2) - 0.5,
        np.array([1.0, 5.0, -2.0, 0.0]).reshape(2, 2, 1),
        np.round(rng.standard_normal((5, 5, 8)) * 3.0, 6),
    ]
    for tensor in tensors:
        cases.append(
            {
                "shape": list(tensor.shape),
                "tensor": tensor.ravel().tolist(),
                "pooled": aggregation.mac_pool(tensor).tolist(),
            }
        )
    payload = {
        "description": "channel-max pooling conformance cases; tensor is row-major (h, w, c)",
        "tolerance": 1e-5,
        "cases": cases,
    }
    (FIXTURES / "mac_conformance.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"mac_conformance.json: {len(cases)} cases")


if __name__ == "__main__":
    FIXTURES.mkdir(exist_ok=True)
    make_tiny_ndvf()
    make_mac_conformance()
