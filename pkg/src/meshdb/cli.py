"""Command line interface: serve, simulate, validate, export, import."""

from __future__ import annotations

import argparse
import json
import sys

from meshdb import __version__


def _fail(code: str, message: str, details=None) -> int:
    print(
        json.dumps({"error": {"code": code, "message": message, "details": details or []}}),
        file=sys.stderr,
    )
    return 1


def cmd_serve(args) -> int:
    from meshdb.server.app import serve
    from meshdb.server.config import ConfigError, load_config

    try:
        config = load_config(
            args.config, overrides={"listen": args.listen, "data_dir": args.data_dir}
        )
    except (ConfigError, OSError) as exc:
        return _fail(getattr(exc, "code", "config-invalid"), str(exc))
    serve(config)
    return 0


def cmd_simulate(args) -> int:
    from meshdb.clock import VirtualClock
    from meshdb.server.app import MeshApp
    from meshdb.server.config import ConfigError, load_config
    from meshdb.server.simfleet import SimFleet, run_simulation

    try:
        config = load_config(args.config, overrides={"data_dir": args.data_dir})
        if args.nodes is not None:
            fleet_data = {"count": args.nodes}
            if config.fleet is not None:
                fleet_data = {**config.fleet.__dict__, "count": args.nodes}
            from meshdb.server.config import SimNodeProfile

            config.fleet = SimNodeProfile(**fleet_data)
        if config.fleet is None or config.fleet.count == 0:
            return _fail("config-invalid", "simulation needs a fleet with count > 0")
    except ConfigError as exc:
        return _fail(exc.code, str(exc))
    clock = VirtualClock(0.0)
    mesh = MeshApp(config, clock=clock)
    fleet = SimFleet(mesh, config.fleet, clock)
    result = run_simulation(mesh, fleet, clock, duration_s=args.minutes * 60)
    matches = sum(1 for s in result["samples"] if s["online"] == s["truth"])
    summary = {
        "nodes": config.fleet.count,
        "simulated_minutes": args.minutes,
        "runs": result["runs"],
        "online_samples_matching_ground_truth": f"{matches}/{len(result['samples'])}",
        "reboots": len(fleet.reboot_log),
        "reports": len(fleet.report_log),
        "streams": len(mesh.datastream.find_streams({})),
    }
    if args.data_dir:
        mesh.save_state()
        summary["data_dir"] = args.data_dir
    print(json.dumps(summary, indent=2))
    return 0


def cmd_validate(args) -> int:
    from meshdb.bootstrap import default_stack

    registry, store, devices, platforms = default_stack()
    try:
        with open(args.config_document, encoding="utf-8") as fh:
            document = json.load(fh)
    except (OSError, ValueError) as exc:
        return _fail("usage-error", f"cannot read config document: {exc}")
    issues = [i.to_dict() for i in store.validate_document("node.config", document)]
    if not issues:
        try:
            descriptor = devices.resolve(args.device)
            issues = [
                e.to_dict() for e in platforms.validate(document, descriptor, args.platform)
            ]
        except Exception as exc:
            return _fail(getattr(exc, "code", "error"), str(exc))
    if issues:
        return _fail("validation-errors", "configuration has outstanding errors", issues)
    print(json.dumps({"valid": True, "device": args.device, "platform": args.platform}))
    return 0


def cmd_export_streams(args) -> int:
    import os

    from meshdb.datastream import DataStream

    path = os.path.join(args.data_dir, "datastream.json")
    if not os.path.exists(path):
        return _fail("usage-error", f"no datastream snapshot at {path}")
    store = DataStream.load(path)
    tags = dict(kv.split("=", 1) for kv in args.tags or [])
    ids = [s.stream_id for s in store.find_streams(tags)]
    for record in store.export_records(ids):
        print(json.dumps(record))
    return 0


def cmd_import_devices(args) -> int:
    from meshdb.firmware.devices import DeviceError, DeviceRegistry

    registry = DeviceRegistry()
    try:
        models = registry.load_directory(args.directory)
    except (DeviceError, OSError, ValueError) as exc:
        return _fail(getattr(exc, "code", "device-error"), str(exc))
    print(json.dumps({"imported": models}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshdb", description="Community mesh network management service."
    )
    parser.add_argument("--version", action="version", version=f"meshdb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service and monitoring scheduler")
    p.add_argument("--config", help="service config JSON file")
    p.add_argument("--listen", help="host:port override")
    p.add_argument("--data-dir", help="state directory override")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run a virtual-clock fleet simulation")
    p.add_argument("--config", help="service config JSON file")
    p.add_argument("--nodes", type=int, help="fleet size override")
    p.add_argument("--minutes", type=float, default=15.0, help="simulated minutes")
    p.add_argument("--data-dir", help="where to save resulting state")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="validate a config document for a device/platform")
    p.add_argument("config_document", help="config document JSON file")
    p.add_argument("device", help="device model id")
    p.add_argument("platform", help="runtime platform name")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export-streams", help="dump stored datapoints as ndjson")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--tags", nargs="*", help="k=v tag filters")
    p.set_defaults(func=cmd_export_streams)

    p = sub.add_parser("import-devices", help="check and list a device descriptor directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_import_devices)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
