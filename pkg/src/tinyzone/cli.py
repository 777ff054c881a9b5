"""``tinyzone`` command line.

Every command prints one JSON report on stdout. Errors go to stderr as a
single line and the process exits nonzero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import memlayout, shmtuner
from .errors import TinyZoneError
from .genmodel import random_image, random_spec, random_weights
from .memlayout import MB, model_memory_cost, plan_layout, tee_ram_size
from .ntinylib import client
from .ntinylib.cfg import load_cfg, serialize_cfg
from .ntinylib.image import load_image, write_ppm
from .weightfile import WeightFile
from .worldsim import cipher
from .worldsim.cost import InvokeCostModel, invoke_cost, mapping_cost
from .worldsim.session import open_session

DEFAULT_TOTAL_RAM = 1024 * MB
DEFAULT_SHM = 194 * shmtuner.UNIT_BYTES
KEY_ENV = "TINYZONE_KEY"


class UsageError(TinyZoneError):
    pass


class _Parser(argparse.ArgumentParser):
    # one-line diagnostics, same as every other error path
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


class _Timer:
    def __init__(self):
        self.phases = {}

    def phase(self, name, fn, ledger=None):
        before = ledger.total_invoke_ms if ledger is not None else 0.0
        start = time.perf_counter()
        result = fn()
        wall = 1000.0 * (time.perf_counter() - start)
        simulated = (ledger.total_invoke_ms - before) if ledger is not None else 0.0
        self.phases[name] = {"simulated_ms": simulated, "wall_ms": wall}
        return result


def _int(text: str) -> int:
    return int(text, 0)


def _key(args) -> int:
    if args.key is not None:
        return args.key
    env = os.environ.get(KEY_ENV)
    if env is None:
        raise UsageError(f"no key given: pass --key or set {KEY_ENV}")
    try:
        return int(env, 0)
    except ValueError:
        raise UsageError(f"{KEY_ENV} is not an integer") from None


def _units(text: str) -> list[int]:
    try:
        units = [int(u) for u in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad unit list {text!r}") from None
    if not units:
        raise argparse.ArgumentTypeError("unit list is empty")
    return units


def _read_weights(path, key: int, nonce: int = 0) -> cipher.EncryptedBlob:
    """Encrypted blob from a TZWE file, or encrypt a TZWT file on the fly."""
    data = Path(path).read_bytes()
    if data[:4] == cipher.MAGIC:
        return cipher.EncryptedBlob.from_bytes(data)
    WeightFile.from_bytes(data)
    return cipher.encrypt(data, key, nonce)


def cmd_plan_memory(args) -> dict:
    spec = load_cfg(args.cfg)
    report = memlayout.plan_report(spec, args.total_ram, args.shm_bytes, args.tee_core)
    return {"command": "plan-memory",
            "inputs": {"cfg": str(args.cfg), "tee_core": args.tee_core, "total_ram": args.total_ram,
                       "shm_bytes": args.shm_bytes},
            **report}


def cmd_bench_invoke(args) -> dict:
    if args.count < 0 or args.secure_mb <= 0:
        raise UsageError("--count must be >= 0 and --secure-mb > 0")
    model = InvokeCostModel()
    remap = args.remap == "on"
    per_invoke = invoke_cost(model, args.secure_mb, remap, 0)
    open_ms = 0.0 if remap else mapping_cost(model, args.secure_mb)
    report = {
        "command": "bench-invoke",
        "inputs": {"secure_mb": args.secure_mb, "remap": args.remap, "count": args.count},
        "timings": {"open": {"simulated_ms": open_ms, "wall_ms": 0.0}},
        "per_invoke_ms": per_invoke,
        "open_ms": open_ms,
        "total_ms": open_ms + args.count * per_invoke,
        "slope_ms_per_100mb": 100 * model.t_per_mb_ms if remap else 0.0,
    }
    if args.plot:
        from .plotting import plot_invoke_times
        sizes = [16, 50, 100, 150, 200, 250, 300, 350, 400, 450, 500]
        plot_invoke_times(args.plot, sizes, [invoke_cost(model, s, True) for s in sizes],
                          [invoke_cost(model, s, False) for s in sizes])
        report["figure"] = str(args.plot)
    return report


def cmd_tune_shm(args) -> dict:
    units = args.units or list(shmtuner.DEFAULT_UNITS)
    timer = _Timer()
    inputs = {"units": units, "threshold": args.threshold}
    if args.synthetic:
        alpha, beta = args.synthetic
        inputs["synthetic"] = [alpha, beta]
        points = timer.phase("sweep", lambda: shmtuner.synthetic_points(alpha, beta, units))
    else:
        if args.cfg is None or args.weights is None:
            raise UsageError("tune-shm needs CFG and WEIGHTS unless --synthetic is given")
        spec = load_cfg(args.cfg)
        key = _key(args)
        blob = _read_weights(args.weights, key)
        tee_ram = tee_ram_size(model_memory_cost(spec), args.tee_core)
        run = shmtuner.session_runner(spec, blob, key, args.total_ram, tee_ram)
        inputs.update(cfg=str(args.cfg), weights=str(args.weights))
        points = timer.phase("sweep", lambda: shmtuner.sweep_transfer(run, units))
    report = timer.phase("fit", lambda: shmtuner.tune_report(points, args.threshold))
    if args.plot:
        from .plotting import plot_power_law
        fit = shmtuner.fit_power_law(points)
        plot_power_law(args.plot, points, fit, report["optimal_bytes"] // shmtuner.UNIT_BYTES)
        report["figure"] = str(args.plot)
    return {"command": "tune-shm", "inputs": inputs, "timings": timer.phases, **report}


def cmd_infer(args) -> dict:
    key = _key(args)
    spec = load_cfg(args.cfg)
    blob = _read_weights(args.weights, key)
    image = load_image(args.image, spec.input_dims)
    labels = None
    if args.labels:
        labels = Path(args.labels).read_text(encoding="utf-8").split("\n")
        labels = [line.strip() for line in labels if line.strip()]
    tee_ram = tee_ram_size(model_memory_cost(spec), args.tee_core)
    plan = plan_layout(args.total_ram, tee_ram, args.shm_bytes)
    timer = _Timer()
    session = timer.phase("open", lambda: open_session(plan, remap_per_invoke=args.remap == "on", key=key))
    led = session.ledger
    try:
        # the ledger already carries the one-time mapping charge from open
        timer.phases["open"]["simulated_ms"] = led.total_invoke_ms
        n_build = timer.phase("build", lambda: client.build_model(session, spec, args.legacy_init), led)
        n_chunks = timer.phase("stream", lambda: client.stream_weights(session, spec, blob), led)
        timer.phase("input", lambda: client.send_input(session, image, key, 1), led)
        probs = timer.phase("infer", lambda: client.fetch_result(session, spec, key), led)
        top = client.classify(probs, labels, min(args.top, probs.size))
    finally:
        ledger = session.close()
    return {
        "command": "infer",
        "inputs": {"cfg": str(args.cfg), "weights": str(args.weights), "image": str(args.image),
                   "shm_bytes": args.shm_bytes, "top": args.top, "legacy_init": args.legacy_init},
        "timings": timer.phases,
        "ledger": ledger.to_dict(),
        "results": {
            "top_k": [{"label": name, "probability": p} for name, p in top],
            "output_dims": list(probs.shape),
            "tee_ram_bytes": tee_ram,
            "num_pgt": plan.num_pgt,
            "invokes": {"build": n_build, "weight_chunks": n_chunks, "protocol": 3},
        },
    }


def cmd_convert(args) -> dict:
    from .convert import convert, load_manifest
    spec, weights = convert(load_manifest(args.manifest))
    prefix = Path(args.output)
    cfg_path, weights_path = prefix.with_name(prefix.name + ".cfg"), prefix.with_name(prefix.name + ".weights")
    cfg_path.write_text(serialize_cfg(spec))
    weights_path.write_bytes(weights.to_bytes())
    return {"command": "convert", "inputs": {"manifest": str(args.manifest)},
            "results": {"cfg": str(cfg_path), "weights": str(weights_path), "layers": len(spec.layers),
                        "weighted_layers": len(weights.layers)}}


def cmd_encrypt_weights(args) -> dict:
    key = _key(args)
    data = Path(args.input).read_bytes()
    WeightFile.from_bytes(data)
    blob = client.encrypt_weights(data, key, args.nonce)
    Path(args.output).write_bytes(blob.to_bytes())
    return {"command": "encrypt-weights", "inputs": {"input": str(args.input), "nonce": args.nonce},
            "results": {"output": str(args.output), "plaintext_bytes": len(data),
                        "checksum": f"{blob.checksum:#018x}"}}


def cmd_gen_model(args) -> dict:
    if args.layers < 1:
        raise UsageError("--layers must be >= 1")
    rng = np.random.default_rng(args.seed)
    spec = random_spec(rng, args.layers)
    weights = random_weights(spec, rng)
    prefix = Path(args.output)
    paths = {k: prefix.with_name(prefix.name + ext) for k, ext in
             (("cfg", ".cfg"), ("weights", ".weights"), ("image", ".ppm"))}
    paths["cfg"].write_text(serialize_cfg(spec))
    paths["weights"].write_bytes(weights.to_bytes())
    write_ppm(paths["image"], random_image(rng, spec.height, spec.width))
    return {"command": "gen-model", "inputs": {"seed": args.seed, "layers": args.layers},
            "results": {k: str(v) for k, v in paths.items()} | {"params": model_memory_cost(spec).param_count}}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tinyzone", description="Secure DNN inference simulator")
    p.add_argument("--report", type=Path, help="also write the JSON report to this file")
    sub = p.add_subparsers(dest="command", required=True)

    def key_args(sp):
        sp.add_argument("--key", type=_int, help=f"64-bit key (decimal or 0x hex); default ${KEY_ENV}")

    def ram_args(sp):
        sp.add_argument("--tee-core", type=_int, default=memlayout.DEFAULT_TEE_CORE,
                        help="bytes reserved for the TEE kernel")
        sp.add_argument("--total-ram", type=_int, default=DEFAULT_TOTAL_RAM)

    sp = sub.add_parser("plan-memory", help="secure memory demand and region layout for a model")
    sp.add_argument("cfg", type=Path)
    ram_args(sp)
    sp.add_argument("--shm-bytes", type=_int, default=DEFAULT_SHM)
    sp.set_defaults(func=cmd_plan_memory)

    sp = sub.add_parser("bench-invoke", help="simulated invoke latency")
    sp.add_argument("--secure-mb", type=float, required=True)
    sp.add_argument("--remap", choices=("on", "off"), default="on")
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--plot", type=Path, help="write an invoke-time figure (PNG)")
    sp.set_defaults(func=cmd_bench_invoke)

    sp = sub.add_parser("tune-shm", help="fit transfer delay against shared memory size")
    sp.add_argument("cfg", type=Path, nargs="?")
    sp.add_argument("weights", type=Path, nargs="?", help="TZWE encrypted or TZWT plaintext weights")
    sp.add_argument("--units", type=_units, help="ascending 4 KB unit counts, e.g. 1,2,4,8")
    sp.add_argument("--threshold", type=float, default=shmtuner.DEFAULT_THRESHOLD)
    sp.add_argument("--synthetic", type=float, nargs=2, metavar=("ALPHA", "BETA"),
                    help="replay points from y = ALPHA * x**BETA instead of sweeping sessions")
    sp.add_argument("--plot", type=Path, help="write the fit figure (PNG)")
    key_args(sp)
    ram_args(sp)
    sp.set_defaults(func=cmd_tune_shm)

    sp = sub.add_parser("infer", help="end-to-end secure inference on one image")
    sp.add_argument("cfg", type=Path)
    sp.add_argument("weights", type=Path)
    sp.add_argument("image", type=Path)
    key_args(sp)
    sp.add_argument("--shm-bytes", type=_int, default=DEFAULT_SHM)
    sp.add_argument("--top", type=int, default=5)
    sp.add_argument("--legacy-init", action="store_true")
    sp.add_argument("--labels", type=Path, help="one label per line")
    sp.add_argument("--remap", choices=("on", "off"), default="off")
    ram_args(sp)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("convert", help="generic manifest -> tinylib cfg + weights")
    sp.add_argument("manifest", type=Path)
    sp.add_argument("-o", "--output", required=True, help="output prefix")
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("encrypt-weights", help="encrypt a TZWT weight file")
    sp.add_argument("input", type=Path)
    sp.add_argument("output", type=Path)
    key_args(sp)
    sp.add_argument("--nonce", type=_int, default=0)
    sp.set_defaults(func=cmd_encrypt_weights)

    sp = sub.add_parser("gen-model", help="random shape-valid cfg, weights and image")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--layers", type=int, default=5)
    sp.add_argument("-o", "--output", default="model", help="output prefix")
    sp.set_defaults(func=cmd_gen_model)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except UsageError as exc:
        print(f"tinyzone: error: {exc}", file=sys.stderr)
        return 2
    except (TinyZoneError, OSError) as exc:
        print(f"tinyzone: error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return 1
    text = json.dumps(report, indent=2)
    print(text)
    if args.report:
        args.report.write_text(text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
