"""Export activation/gradient dumps or serve live scores.

Examples:

    decomcam-export --model resnet50 --layer layer4 \
        --image photo.png --prompt class:285 --out photo.dcam

    decomcam-export --model resnet50 --layer layer4 --serve --bind 127.0.0.1:7471
"""

from __future__ import annotations

import argparse
import sys

from .adapters import LayerNotFoundError, load_image, make_adapter
from .dcam_writer import write_dump
from .server import ScoreServer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decomcam-export", description=__doc__)
    parser.add_argument("--model", default="resnet50",
                        help="'resnet50' or 'clip:<model id>' (default: resnet50)")
    parser.add_argument("--layer", default="layer4",
                        help="named module to hook (default: layer4)")
    parser.add_argument("--image", help="input image file (export mode)")
    parser.add_argument("--prompt", help="concept prompt; 'class:<idx>' for classifiers")
    parser.add_argument("--out", help="output .dcam path (export mode)")
    parser.add_argument("--serve", action="store_true", help="run a scoring endpoint instead")
    parser.add_argument("--bind", default="127.0.0.1:7471", help="host:port for --serve")
    return parser


def run_export(args) -> int:
    if not (args.image and args.prompt and args.out):
        print("export mode needs --image, --prompt and --out", file=sys.stderr)
        return 64
    try:
        adapter = make_adapter(args.model, args.layer)
    except LayerNotFoundError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 64
    try:
        img = load_image(args.image)
    except OSError as e:
        print(f"cannot read image: {e}", file=sys.stderr)
        return 2
    result = adapter.probe(img, args.prompt)
    write_dump(
        args.out,
        image=img,
        activations=result.activations,
        gradients=result.gradients,
        score=result.score,
        concept=args.prompt,
        layer=args.layer,
        model=adapter.model_tag,
        extras={
            "meta.preprocess": b"resize256-centercrop224-unit-range",
            "meta.score-kind": (
                b"raw-cosine-similarity" if args.model.startswith("clip:") else b"logit"
            ),
        },
    )
    print(f"wrote {args.out}  score={result.score:.6f} "
          f"activations={'x'.join(map(str, result.activations.shape))}")
    return 0


def run_serve(args) -> int:
    host, _, port = args.bind.rpartition(":")
    try:
        adapter = make_adapter(args.model, args.layer)
        server = ScoreServer(adapter, host or "127.0.0.1", int(port))
    except (LayerNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 64
    print(f"scoring endpoint on {server.host}:{server.port} (model {adapter.model_tag})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.serve:
        return run_serve(args)
    return run_export(args)


if __name__ == "__main__":
    sys.exit(main())
