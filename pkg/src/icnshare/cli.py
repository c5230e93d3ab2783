"""``icnshare`` command-line driver.

Keys live under ``--home`` (default ``$ICNSHARE_HOME`` or ``./.icnshare``):

    keys/<identity>/{meta.json,params.bin,msk.bin,sk.bin}
    directory.bin     identity -> SP resolution
    nodes.json        owner -> {endpoint, construction}; stands in for ICN routing

Exit codes: 0 success, 1 usage, 2 protocol/crypto failure, 3 denied.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import ibpre, overhead
from .client import ControlError, Denied, OwnerControl, ProtocolError, fetch_item, rotation_material, scope_keys_for
from .content import ContentError, SealedItem, seal_item
from .daemon import NodeConfig, run_node
from .directory import FileDirectory, UnknownIdentity
from .encoding import DecodeError
from .handshake import CONTROL_SCOPE, ChannelError, HandshakeError
from .node import NodeError, StorageNode

EXIT_OK, EXIT_USAGE, EXIT_FAILURE, EXIT_DENIED = 0, 1, 2, 3
HOME_ENV = "ICNSHARE_HOME"


class UsageError(Exception):
    pass


class Keystore:
    def __init__(self, home: Path, identity: str):
        self.identity = identity
        self.path = home / "keys" / identity

    @property
    def meta(self) -> dict:
        return json.loads((self.path / "meta.json").read_text())

    def exists(self) -> bool:
        return (self.path / "meta.json").exists()

    def require(self) -> "Keystore":
        if not self.exists():
            raise UsageError(f"no keystore for {self.identity!r}; run keygen first")
        return self

    def write(self, params, msk, sk, **meta) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        (self.path / "params.bin").write_bytes(params.to_bytes())
        (self.path / "msk.bin").write_bytes(msk.to_bytes())
        (self.path / "sk.bin").write_bytes(sk.to_bytes())
        merged = self.meta if self.exists() else {}
        merged.update({"identity": self.identity, "domain": params.domain_id, **meta})
        (self.path / "meta.json").write_text(json.dumps(merged, indent=2) + "\n")

    def update_meta(self, **meta) -> None:
        merged = self.meta
        merged.update(meta)
        (self.path / "meta.json").write_text(json.dumps(merged, indent=2) + "\n")

    def params(self) -> ibpre.DomainParams:
        return ibpre.DomainParams.from_bytes((self.path / "params.bin").read_bytes())

    def msk(self) -> ibpre.MasterSecret:
        return ibpre.MasterSecret.from_bytes((self.path / "msk.bin").read_bytes())

    def sk(self) -> ibpre.UserSecretKey:
        return ibpre.UserSecretKey.from_bytes((self.path / "sk.bin").read_bytes())


def _home(args) -> Path:
    return Path(args.home or os.environ.get(HOME_ENV) or ".icnshare")


def _directory(args) -> FileDirectory:
    return FileDirectory(args.directory or _home(args) / "directory.bin")


def _registry_path(args) -> Path:
    return _home(args) / "nodes.json"


def _registry(args) -> dict:
    path = _registry_path(args)
    return json.loads(path.read_text()) if path.exists() else {}


def _endpoint(args, owner: str):
    endpoint = args.node or _registry(args).get(owner, {}).get("endpoint")
    if not endpoint:
        raise UsageError(f"no node endpoint known for {owner!r}; pass --node HOST:PORT")
    host, _, port = endpoint.rpartition(":")
    return host, int(port)


def _construction(args, owner: str) -> int:
    entry = _registry(args).get(owner)
    if entry is None:
        raise UsageError(f"no node registered for {owner!r}; run init-node first")
    return int(entry["construction"])


def _control(args) -> OwnerControl:
    ks = Keystore(_home(args), args.as_).require()
    host, port = _endpoint(args, ks.identity)
    return OwnerControl(host, port, ks.identity, ks.sk(), ks.params())


def _split(value: str) -> List[str]:
    return [v for v in (value or "").split(",") if v]


# -- commands ---------------------------------------------------------------

def cmd_keygen(args) -> int:
    ks = Keystore(_home(args), args.as_)
    if ks.exists() and not args.force:
        raise UsageError(f"keystore for {args.as_!r} exists (use --force)")
    params, msk = ibpre.setup(args.security, args.domain or args.as_)
    ks.write(params, msk, ibpre.extract(params, msk, args.as_))
    print(f"generated PKG and secret key for {args.as_} in {ks.path}")
    return EXIT_OK


def cmd_publish_params(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    version = _directory(args).publish_params(ks.identity, ks.params())
    print(f"published SP for {ks.identity} (version {version})")
    return EXIT_OK


def cmd_init_node(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    params, msk = ks.params(), ks.msk()
    snapshot = Path(args.snapshot).resolve()
    node = StorageNode.create(ks.identity, params, args.construction, snapshot_path=snapshot)
    node.install_scope_key(CONTROL_SCOPE, ibpre.extract(params, msk, CONTROL_SCOPE))
    cfg = NodeConfig(ks.identity, args.construction, args.listen, str(snapshot),
                     str(Path(args.directory or _home(args) / "directory.bin").resolve()),
                     args.audit)
    if args.config_out:
        cfg.save(args.config_out)
    reg = _registry(args)
    reg[ks.identity] = {"endpoint": args.listen, "construction": args.construction}
    _registry_path(args).parent.mkdir(parents=True, exist_ok=True)
    _registry_path(args).write_text(json.dumps(reg, indent=2) + "\n")
    print(f"initialised construction-{args.construction} node for {ks.identity} at {snapshot}")
    return EXIT_OK


def cmd_run_node(args) -> int:
    cfg = NodeConfig.load(args.config)
    run_node(cfg)
    return EXIT_OK


def cmd_register_subscriber(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    sp = _directory(args).lookup_params(args.id)
    rk = None
    if _construction(args, ks.identity) == 1:
        rk = ibpre.rkgen(ks.params(), ks.sk(), args.id, sp)
    with _control(args) as ctl:
        ctl.register_subscriber(args.id, sp, rk)
    print(f"registered {args.id}")
    return EXIT_OK


def _policy_rks(args, ks: Keystore, policy: str, members: List[str]):
    if _construction(args, ks.identity) != 2:
        return []
    params = ks.params()
    sk_policy = ibpre.extract(params, ks.msk(), policy)
    directory = _directory(args)
    return [ibpre.rkgen(params, sk_policy, m, directory.lookup_params(m)) for m in members]


def cmd_define_policy(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    members = _split(args.members)
    rks = _policy_rks(args, ks, args.policy, members)
    with _control(args) as ctl:
        ctl.define_policy(args.policy, members, rks)
    print(f"defined policy {args.policy} with {len(members)} member(s)")
    return EXIT_OK


def cmd_policy(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    ids = _split(args.id)
    with _control(args) as ctl:
        if args.action == "add":
            ctl.update_policy(args.policy, add=ids,
                              rks_for_added=_policy_rks(args, ks, args.policy, ids))
        else:
            ctl.update_policy(args.policy, remove=ids)
    print(f"policy {args.policy}: {args.action} {', '.join(ids)}")
    return EXIT_OK


def cmd_seal(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    host_owner = args.to or ks.identity
    params = ks.params() if host_owner == ks.identity else _directory(args).lookup_params(host_owner)
    if _construction(args, host_owner) == 2:
        if not args.policy:
            raise UsageError("construction-2 nodes need --policy for sealing")
        target = args.policy
    else:
        target = host_owner
    item = seal_item(Path(args.input).read_bytes(), args.item, target, params)
    Path(args.out).write_bytes(item.to_bytes())
    print(f"sealed {args.item} to {target!r} under {params.domain_id!r}")
    return EXIT_OK


def cmd_publish(args) -> int:
    item = SealedItem.from_bytes(Path(args.sealed).read_bytes())
    with _control(args) as ctl:
        ctl.publish(item, args.policy)
    print(f"published {item.item_id} under {args.policy}")
    return EXIT_OK


def cmd_publish_foreign(args) -> int:
    item = SealedItem.from_bytes(Path(args.sealed).read_bytes())
    with _control(args) as ctl:
        ctl.publish_foreign(item, args.policy, args.from_)
    print(f"published {item.item_id} from {args.from_} under {args.policy}")
    return EXIT_OK


def cmd_install_scope_key(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    sk = ibpre.extract(ks.params(), ks.msk(), args.scope)
    with _control(args) as ctl:
        ctl.install_scope_key(args.scope, sk)
    print(f"installed scope key for {args.scope!r}")
    return EXIT_OK


def _default_owner(args) -> str:
    owners = list(_registry(args))
    if len(owners) != 1:
        raise UsageError("several or no nodes registered; pass --owner")
    return owners[0]


def cmd_fetch(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    owner = args.owner or _default_owner(args)
    owner_params = _directory(args).lookup_params(owner)
    host, port = _endpoint(args, owner)
    data = fetch_item(host, port, args.item, ks.identity, ks.sk(), ks.params(), owner_params,
                      scope=args.scope)
    if args.out in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(args.out).write_bytes(data)
        print(f"fetched {args.item} ({len(data)} bytes) -> {args.out}")
    return EXIT_OK


def cmd_rotate(args) -> int:
    ks = Keystore(_home(args), args.as_).require()
    old_params, old_msk = ks.params(), ks.msk()
    new_params, new_msk = ibpre.setup(args.security, old_params.domain_id)
    with _control(args) as ctl:
        tables, scopes = ctl.export()
        records, rks = rotation_material(tables, old_params, old_msk, new_params, new_msk)
        ctl.rotate(new_params, records, rks, scope_keys_for(scopes, new_params, new_msk))
    ks.write(new_params, new_msk, ibpre.extract(new_params, new_msk, ks.identity))
    version = _directory(args).publish_params(ks.identity, new_params)
    print(f"rotated keys for {ks.identity}: {len(records)} key record(s), {len(rks)} "
          f"re-encryption key(s); SP version {version}")
    return EXIT_OK


def _schemes(value: str):
    if value == "all":
        return list(overhead.ALL_SCHEMES)
    return [overhead.SchemeKind(v) for v in _split(value)]


def cmd_overhead(args) -> int:
    schemes = _schemes(args.scheme)
    fixed = overhead.OverheadScenario(args.U, args.G, args.UG, args.F)
    if args.sweep:
        variable = "U_G" if args.sweep.upper() in ("UG", "U_G") else "F"
        lo, _, hi = (args.range or ("1:%d" % (args.U if variable == "U_G" else 100))).partition(":")
        sys.stdout.write(overhead.sweep_csv(schemes, variable, range(int(lo), int(hi) + 1), fixed))
        return EXIT_OK
    print("scheme,bits")
    for scheme in schemes:
        print(f"{scheme.value},{overhead.storage_overhead(scheme, overhead.DEFAULT_CONSTANTS, fixed)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    report = overhead.bench_crypto(args.trials, args.item_size)
    if args.csv:
        sys.stdout.write(overhead.bench_csv(report))
    else:
        print(overhead.format_bench(report))
    return EXIT_OK


# -- parser -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icnshare", description=__doc__.split("\n")[0])
    p.add_argument("--home", help=f"state directory (default ${HOME_ENV} or ./.icnshare)")
    p.add_argument("--directory", help="directory file (default HOME/directory.bin)")
    p.add_argument("--node", help="node endpoint HOST:PORT (default from nodes.json)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, fn, help, who=True):
        sp = sub.add_parser(name, help=help)
        if who:
            sp.add_argument("--as", dest="as_", required=True, metavar="IDENTITY")
        sp.set_defaults(fn=fn)
        return sp

    sp = command("keygen", cmd_keygen, "run a personal PKG and extract the own secret key")
    sp.add_argument("--domain")
    sp.add_argument("--security", type=int, default=128)
    sp.add_argument("--force", action="store_true")

    command("publish-params", cmd_publish_params, "publish SP to the directory")

    sp = command("init-node", cmd_init_node, "create an empty node snapshot for an owner")
    sp.add_argument("--construction", type=int, choices=(1, 2), required=True)
    sp.add_argument("--snapshot", required=True)
    sp.add_argument("--listen", default="127.0.0.1:7411")
    sp.add_argument("--audit")
    sp.add_argument("--config-out")

    sp = command("run-node", cmd_run_node, "serve a node", who=False)
    sp.add_argument("--config", help="node config JSON (default $ICNSHARE_CONFIG)")

    sp = command("register-subscriber", cmd_register_subscriber, "add a known subscriber")
    sp.add_argument("--id", required=True)

    sp = command("define-policy", cmd_define_policy, "create or replace a policy")
    sp.add_argument("--policy", required=True)
    sp.add_argument("--members", required=True, help="comma-separated identities")

    sp = command("policy", cmd_policy, "add or remove policy members")
    sp.add_argument("action", choices=("add", "remove"))
    sp.add_argument("--policy", required=True)
    sp.add_argument("--id", required=True, help="comma-separated identities")

    sp = command("seal", cmd_seal, "encrypt a content item")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--item", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--policy")
    sp.add_argument("--to", help="seal for another owner's node (friend-of-friend)")

    sp = command("publish", cmd_publish, "store a sealed item at the own node")
    sp.add_argument("--sealed", required=True)
    sp.add_argument("--policy", required=True)

    sp = command("publish-foreign", cmd_publish_foreign, "host an item sealed by another owner")
    sp.add_argument("--sealed", required=True)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--from", dest="from_", required=True)

    sp = command("install-scope-key", cmd_install_scope_key, "give the node an item/prefix key")
    sp.add_argument("--scope", required=True)

    sp = command("fetch", cmd_fetch, "handshake, request and decrypt an item")
    sp.add_argument("--owner", help="content owner (default: the only registered node)")
    sp.add_argument("--item", required=True)
    sp.add_argument("--scope", help="authenticated scope (item id or prefix)")
    sp.add_argument("--out", help="output path (default stdout)")

    sp = command("rotate", cmd_rotate, "recover from master-secret compromise")
    sp.add_argument("--security", type=int, default=128)

    sp = command("overhead", cmd_overhead, "storage overhead model", who=False)
    sp.add_argument("--scheme", default="all")
    sp.add_argument("--sweep", choices=("UG", "U_G", "F"))
    sp.add_argument("--range", help="LO:HI inclusive sweep range")
    sp.add_argument("--U", type=int, default=50)
    sp.add_argument("--G", type=int, default=2)
    sp.add_argument("--UG", type=int, default=25)
    sp.add_argument("--F", type=int, default=50)

    sp = command("bench", cmd_bench, "time the IB-PRE key operations", who=False)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--item-size", type=int, default=1024)
    sp.add_argument("--csv", action="store_true")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr)
    try:
        return args.fn(args)
    except (UsageError, UnknownIdentity, FileNotFoundError, ValueError) as exc:
        if isinstance(exc, DecodeError):
            print(f"icnshare: malformed input: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        print(f"icnshare: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Denied as exc:
        print(f"icnshare: denied: {exc}", file=sys.stderr)
        return EXIT_DENIED
    except (HandshakeError, ChannelError, ProtocolError, ControlError, NodeError,
            ContentError, ibpre.IBPREError, ConnectionError, OSError) as exc:
        print(f"icnshare: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
