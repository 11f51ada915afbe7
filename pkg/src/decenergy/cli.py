"""Command-line front end.

Every subcommand is a thin client: file contents are shipped to the HTTP
service (an in-process instance by default, a remote one with --server) and
the responses are written back to disk. Exit codes: 0 success, 2 data/model
error, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional

from .dataset_io import canonical_json_dumps
from .errors import DecenergyError
from .types import (
    ClassLabel,
    Codec,
    Condition,
    DecoderKind,
    EnergyTarget,
    FeatureSetKind,
    Regressor,
)

EXIT_OK = 0
EXIT_DATA = 2
EXIT_USAGE = 64

DEFAULT_SEED = 42


class _UsageError(Exception):
    pass


class _DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 by default; the contract here is 64."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class ServiceClient:
    """POSTs against a remote server or an in-process application."""

    def __init__(self, server: Optional[str] = None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # starlette warns about its own httpx-based test client; the
                # pinned versions here work together.
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        return self._handle(self._client.post(path, json=payload))

    @staticmethod
    def _handle(response) -> dict[str, Any]:
        if 200 <= response.status_code < 300:
            return response.json()
        try:
            body = response.json()
        except ValueError:
            body = {}
        if response.status_code == 400 and "error" in body:
            raise _DataError(f"{body['error']}: {body.get('message', '')}")
        if response.status_code == 422:
            raise _UsageError(f"invalid request: {body.get('detail', response.text)}")
        raise _DataError(f"service returned HTTP {response.status_code}: {response.text}")


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _DataError(f"cannot read {what} '{path}': {exc}") from None


def _dataset_payload(path: str, what: str = "dataset") -> dict[str, str]:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix not in ("csv", "json"):
        raise _UsageError(f"{what} '{path}' must end in .csv or .json")
    return {"format": suffix, "content": _read_text(path, what)}


def _codec_list(text: str) -> list[str]:
    values = [c.strip().upper() for c in text.split(",") if c.strip()]
    allowed = {c.value for c in Codec}
    bad = [c for c in values if c not in allowed]
    if bad:
        raise _UsageError(f"unknown codec(s) {bad}; choose from {sorted(allowed)}")
    if not values:
        raise _UsageError("codec list is empty")
    return values


def _require(args: argparse.Namespace, **names: str) -> None:
    missing = [flag for dest, flag in names.items() if getattr(args, dest, None) is None]
    if missing:
        raise _UsageError(f"missing required option(s): {', '.join(missing)}")


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_resolved_config(args: argparse.Namespace, out: Path) -> None:
    skip = {"command", "config"}
    resolved = {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in sorted(vars(args).items())
        if key not in skip
    }
    (out / "resolved_config.json").write_text(canonical_json_dumps(resolved), encoding="utf-8")


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _emit(args: argparse.Namespace, out: Path, stem: str,
          json_obj: dict[str, Any], table: str) -> None:
    if args.format in ("json", "both"):
        _write(out, f"{stem}.json", canonical_json_dumps(json_obj))
    if args.format in ("table", "both"):
        _write(out, f"{stem}.txt", table)
    if args.format == "json":
        sys.stdout.write(canonical_json_dumps(json_obj))
    else:
        sys.stdout.write(table)


# --- subcommand handlers --------------------------------------------------------


def _cmd_ingest(args: argparse.Namespace, client: ServiceClient) -> int:
    _require(
        args,
        record_id="--id", codec="--codec", decoder_name="--decoder-name",
        decoder_kind="--decoder-kind", sequence="--sequence",
        class_label="--class", qp="--qp", condition="--condition",
    )
    out = _out_dir(args)
    dataset_path = args.dataset or args.out
    payload: dict[str, Any] = {
        "metadata": {
            "id": args.record_id,
            "codec": args.codec,
            "decoder_name": args.decoder_name,
            "decoder_kind": args.decoder_kind,
            "sequence": args.sequence,
            "class": args.class_label,
            "qp": args.qp,
            "condition": args.condition,
        },
        "max_deviation": args.max_deviation,
        "confidence": args.confidence,
    }
    if args.dataset and Path(args.dataset).exists():
        payload["dataset"] = _dataset_payload(args.dataset)
    if args.callgrind:
        payload["callgrind_text"] = _read_text(args.callgrind, "callgrind profile")
    if args.perf:
        payload["perf_text"] = _read_text(args.perf, "perf output")
    if args.t_dec_sw is not None:
        payload["t_dec_sw"] = args.t_dec_sw
    if args.measurements_sw:
        payload["measurements_sw"] = _read_text(args.measurements_sw, "measurement log")
    if args.measurements_hw:
        payload["measurements_hw"] = _read_text(args.measurements_hw, "measurement log")

    response = client.post("/ingest", payload)
    target = Path(dataset_path) if dataset_path else out / "dataset.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(response["dataset"]["content"], encoding="utf-8")
    for entry in response["confidence"]:
        halfwidth = entry["relative_halfwidth"]
        halfwidth_text = f"{100.0 * halfwidth:.3f}%" if halfwidth is not None else "n/a"
        status = "passed" if entry["passed"] else "FAILED"
        print(
            f"{entry['target']} {entry['label']}: mean={entry['mean']:.4f} J "
            f"n={entry['n']} halfwidth={halfwidth_text} {status}"
        )
    print(f"record '{response['record_id']}' added; dataset now has "
          f"{response['n_records']} record(s) at {target}")
    _write_resolved_config(args, out)
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace, client: ServiceClient) -> int:
    out = _out_dir(args)
    payload: dict[str, Any] = {"seed": args.seed}
    if args.spec:
        try:
            payload["spec"] = json.loads(_read_text(args.spec, "generator spec"))
        except json.JSONDecodeError as exc:
            raise _DataError(f"generator spec '{args.spec}' is not valid JSON: {exc}") from None
    response = client.post("/synth", payload)
    dataset_path = _write(out, "dataset.csv", response["dataset_csv"])
    _write(out, "ground_truth.json", canonical_json_dumps(response["ground_truth"]))
    print(f"wrote {response['n_records']} records to {dataset_path}")
    _write_resolved_config(args, out)
    return EXIT_OK


def _cmd_train(args: argparse.Namespace, client: ServiceClient) -> int:
    _require(args, dataset="--dataset")
    out = _out_dir(args)
    payload: dict[str, Any] = {
        "dataset": _dataset_payload(args.dataset),
        "kind": args.kind,
        "regressor": args.regressor,
        "target": args.target,
        "seed": args.seed,
        "rehwed": args.rehwed,
        "nonnegative": args.nonnegative,
        "restarts": args.restarts,
    }
    if args.codecs:
        payload["codecs"] = _codec_list(args.codecs)
    if args.scope:
        payload["decoder_scope"] = args.scope
    if args.intercept != "auto":
        payload["intercept"] = args.intercept == "on"
    response = client.post("/models/train", payload)
    model_path = _write(out, "model.json", canonical_json_dumps(response["model"]))
    print(f"trained {args.regressor} on {response['n_training_records']} record(s); "
          f"model written to {model_path}")
    _write_resolved_config(args, out)
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace, client: ServiceClient) -> int:
    _require(args, dataset="--dataset")
    out = _out_dir(args)
    payload: dict[str, Any] = {
        "dataset": _dataset_payload(args.dataset),
        "regressor": args.regressor,
        "target": args.target,
        "k": args.k,
        "seed": args.seed,
    }
    if args.kind:
        payload["kinds"] = args.kind
    response = client.post("/evaluate", payload)
    _emit(args, out, "evaluation", {"groups": response["groups"]}, response["table"])
    _write_resolved_config(args, out)
    return EXIT_OK


def _cmd_cross_predict(args: argparse.Namespace, client: ServiceClient) -> int:
    _require(args, train="--train", verify="--verify")
    if args.phase is None and not (args.train_codecs and args.verify_codec):
        raise _UsageError("pass --phase 1..7 or both --train-codecs and --verify-codec")
    out = _out_dir(args)
    payload: dict[str, Any] = {
        "train": _dataset_payload(args.train, "training dataset"),
        "verify": _dataset_payload(args.verify, "verification dataset"),
        "decoder_scope": args.scope,
        "kinds": args.kind or [FeatureSetKind.VALGRIND_13PE.value],
        "regressor": args.regressor,
        "seed": args.seed,
    }
    if args.phase is not None:
        payload["phase"] = args.phase
    else:
        payload["training_codecs"] = _codec_list(args.train_codecs)
        payload["verification_codec"] = args.verify_codec
    response = client.post("/cross-predict", payload)
    _emit(args, out, "cross_codec", {"outcomes": response["outcomes"]}, response["table"])
    for key, content in sorted(response["scatter"].items()):
        _write(out, f"scatter_{key}.csv", content)
    _write_resolved_config(args, out)
    return EXIT_OK


def _cmd_rehwed(args: argparse.Namespace, client: ServiceClient) -> int:
    _require(args, model="--model", test="--test", anchor="--anchor")
    out = _out_dir(args)
    try:
        model = json.loads(_read_text(args.model, "model file"))
    except json.JSONDecodeError as exc:
        raise _DataError(f"model file '{args.model}' is not valid JSON: {exc}") from None
    payload = {
        "model": model,
        "test": _dataset_payload(args.test, "test profile set"),
        "anchor": _dataset_payload(args.anchor, "anchor profile set"),
        "test_label": args.test_label,
        "anchor_label": args.anchor_label,
    }
    response = client.post("/rehwed", payload)
    _emit(args, out, "rehwed", {"report": response["report"]}, response["table"])
    _write_resolved_config(args, out)
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace, client: ServiceClient) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


# --- parser construction -----------------------------------------------------------


def _common_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="seed for all randomness (default %(default)s)")
    common.add_argument("--config", default=None,
                        help="JSON config file; keys are flag names, flags win")
    common.add_argument("--out-dir", default="decenergy-out",
                        help="directory for outputs (default %(default)s)")
    common.add_argument("--format", choices=["json", "table", "both"], default="both",
                        help="output format (default %(default)s)")
    common.add_argument("--server", default=None,
                        help="base URL of a running service; default runs in-process")
    return common


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = _common_parser()
    parser = _Parser(
        prog="decenergy",
        description="Model hardware video-decoder energy from software profiling features.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    built: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, help_text: str) -> argparse.ArgumentParser:
        p = subparsers.add_parser(name, parents=[common], help=help_text)
        built[name] = p
        return p

    p = sub("ingest", "parse profiler/measurement files into a dataset record")
    p.add_argument("--id", dest="record_id", help="bitstream record id")
    p.add_argument("--codec", choices=[c.value for c in Codec])
    p.add_argument("--decoder-name")
    p.add_argument("--decoder-kind", choices=[k.value for k in DecoderKind])
    p.add_argument("--sequence")
    p.add_argument("--class", dest="class_label", choices=[c.value for c in ClassLabel])
    p.add_argument("--qp", type=int)
    p.add_argument("--condition", choices=[c.value for c in Condition])
    p.add_argument("--callgrind", help="callgrind profile to parse")
    p.add_argument("--perf", help="perf stat field-separated output to parse")
    p.add_argument("--t-dec-sw", type=float, help="software decoding time in seconds")
    p.add_argument("--measurements-sw", help="label,repeat_index,joules CSV (software setup)")
    p.add_argument("--measurements-hw", help="label,repeat_index,joules CSV (hardware setup)")
    p.add_argument("--dataset", help="existing dataset to append to")
    p.add_argument("--out", help="dataset file to write (default: --dataset or out-dir/dataset.csv)")
    p.add_argument("--max-deviation", type=float, default=0.02)
    p.add_argument("--confidence", type=float, default=0.99)

    p = sub("synth", "generate a synthetic corpus with planted ground truth")
    p.add_argument("--spec", help="generator spec JSON (defaults used when omitted)")

    p = sub("train", "fit a model on a dataset and write model JSON")
    p.add_argument("--dataset")
    p.add_argument("--kind", choices=[k.value for k in FeatureSetKind],
                   default=FeatureSetKind.VALGRIND_13PE.value)
    p.add_argument("--regressor", choices=[r.value for r in Regressor],
                   default=Regressor.GPR.value)
    p.add_argument("--target", choices=[t.value for t in EnergyTarget],
                   default=EnergyTarget.ENERGY_HW.value)
    p.add_argument("--rehwed", action="store_true",
                   help="train the pretrained hardware-energy model with provenance")
    p.add_argument("--codecs", help="comma-separated codec filter, e.g. HEVC,VP9,AV1")
    p.add_argument("--scope", choices=[k.value for k in DecoderKind],
                   help="restrict to one decoder kind")
    p.add_argument("--intercept", choices=["auto", "on", "off"], default="auto")
    p.add_argument("--nonnegative", action="store_true",
                   help="constrain linear coefficients to be >= 0")
    p.add_argument("--restarts", type=int, default=5)

    p = sub("evaluate", "k-fold cross-validation MAPE/PCC per decoder")
    p.add_argument("--dataset")
    p.add_argument("--kind", action="append", choices=[k.value for k in FeatureSetKind],
                   help="feature set (repeatable; default: all present on every record)")
    p.add_argument("--regressor", choices=[r.value for r in Regressor],
                   default=Regressor.GPR.value)
    p.add_argument("--target", choices=[t.value for t in EnergyTarget],
                   default=EnergyTarget.ENERGY_HW.value)
    p.add_argument("--k", type=int, default=10)

    p = sub("cross-predict", "train on some codecs, verify on another")
    p.add_argument("--train", help="training dataset file")
    p.add_argument("--verify", help="verification dataset file")
    p.add_argument("--phase", type=int, choices=range(1, 8),
                   help="built-in training/verification assignment (1..7)")
    p.add_argument("--train-codecs", help="custom: comma-separated training codecs")
    p.add_argument("--verify-codec", choices=[c.value for c in Codec],
                   help="custom: verification codec")
    p.add_argument("--scope", choices=["reference", "optimized", "both"], default="both")
    p.add_argument("--kind", action="append", choices=[k.value for k in FeatureSetKind],
                   help="feature set (repeatable; default valgrind_13pe)")
    p.add_argument("--regressor", choices=[r.value for r in Regressor],
                   default=Regressor.GPR.value)

    p = sub("rehwed", "relative expected hardware energy of test vs anchor decoder")
    p.add_argument("--model", help="pretrained model JSON (from train --rehwed)")
    p.add_argument("--test", help="test decoder profile dataset")
    p.add_argument("--anchor", help="anchor decoder profile dataset")
    p.add_argument("--test-label", default="test")
    p.add_argument("--anchor-label", default="anchor")

    p = sub("serve", "run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser, built


_HANDLERS = {
    "ingest": _cmd_ingest,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "cross-predict": _cmd_cross_predict,
    "rehwed": _cmd_rehwed,
    "serve": _cmd_serve,
}


def _load_config(path: str) -> dict[str, Any]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _DataError(f"cannot read config '{path}': {exc}") from None
    except json.JSONDecodeError as exc:
        raise _DataError(f"config '{path}' is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise _DataError(f"config '{path}' must be a JSON object")
    return {str(k).replace("-", "_"): v for k, v in payload.items()}


def main(argv: Optional[list[str]] = None) -> int:
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command != "serve" and getattr(args, "config", None):
            config = _load_config(args.config)
            target = subparsers[args.command]
            known = {action.dest for action in target._actions}
            unknown = sorted(set(config) - known)
            if unknown:
                print(f"warning: ignoring unknown config keys {unknown}", file=sys.stderr)
            target.set_defaults(**{k: v for k, v in config.items() if k in known})
            args = parser.parse_args(argv)
        client = ServiceClient(getattr(args, "server", None)) if args.command != "serve" else None
        return _HANDLERS[args.command](args, client)
    except SystemExit as exc:  # argparse exits; keep main() callable in-process
        return int(exc.code or 0)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (_DataError, DecenergyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
