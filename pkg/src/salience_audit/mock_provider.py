"""Command-line entry for the built-in mock provider.

Usage: audit-mock-provider <job_manifest_path>

Reads the job manifest, computes the deterministic block-mean salience and
score for every requested image, writes one SALM per request into the job's
output directory (`out/` sibling of the images dir unless the manifest's
directory layout says otherwise) and a result manifest.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

from .provider_contract import RESULT_MANIFEST_NAME, mock_salience
from .salience_io import load_image, write_salience


def serve(job_manifest_path: str, output_dir: str | None = None) -> Path:
    manifest_path = Path(job_manifest_path)
    job = json.loads(manifest_path.read_text())
    images_dir = manifest_path.parent
    out_dir = Path(output_dir) if output_dir else images_dir / "out"
    out_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for req in job["requests"]:
        sid = req["sample_id"]
        tag = req["variant_tag"]
        stem = f"{sid}__{tag.replace(':', '_').replace('/', '_')}"
        try:
            img = load_image(images_dir / req["image"])
            smap, score = mock_salience(img)
        except Exception as exc:  # noqa: BLE001 - per-row failure is part of the protocol
            results.append(
                {"sample_id": sid, "variant_tag": tag, "status": "failed", "reason": str(exc)}
            )
            continue
        salm_name = stem + ".salm"
        write_salience(smap, out_dir / salm_name)
        results.append(
            {
                "sample_id": sid,
                "variant_tag": tag,
                "status": "ok",
                "salience": salm_name,
                "score": score,
            }
        )

    result_doc = {"job_id": job["job_id"], "results": results}
    result_path = out_dir / RESULT_MANIFEST_NAME
    result_path.write_text(json.dumps(result_doc, indent=1, sort_keys=True))
    return result_path


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: audit-mock-provider <job_manifest_path>", file=sys.stderr)
        return 2
    serve(argv[0])
    return 0


if __name__ == "__main__":
    sys.exit(main())
