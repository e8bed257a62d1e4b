"""Scenario files: parsing, validation, compilation, and execution.

A scenario is a JSON document declaring the participating countries, the
named actors, and an ordered list of day-stamped events. Parsing is
all-or-nothing: every structural and semantic problem is collected (with its
JSON path or event index) and reported together; nothing executes unless the
whole file is clean.

Compilation resolves actor names to derived identities and pre-signs every
local transfer exactly as a wallet would, so the simulation's job is what a
node's job is: verify, validate, commit. Amounts are accepted either as
integer millicoin or as decimal worldcoin strings with at most three
decimals ("0.5" means 500 millicoin).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema

from .core import (
    DONATION,
    PEOPLE,
    SALE,
    AccountId,
    ChannelPolicy,
    ScenarioError,
    as_amount,
    build_tx,
    default_government_policy,
    default_people_policy,
    tx_to_json_dict,
    worldcoin_to_millicoin,
)
from .gov_ledger import export_chain_lines
from .identity import Keypair, derive_seed, generate_identity, load_seed_file, sign_payload
from .people_ledger import summary_to_json_dict
from .netsim import (
    AdvanceEvent,
    BirthEvent,
    CheckpointEvent,
    CountrySpec,
    Event,
    GovTransferEvent,
    LocalTransferEvent,
    SimConfig,
    World,
)

MAX_DAY = 10_000_000

SCENARIO_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["countries"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "max_delay_days": {"type": "integer", "minimum": 0, "maximum": 3650},
        "checkpoint_interval": {"type": "integer", "minimum": 1},
        "on_reject": {"enum": ["record", "fail"]},
        "key_file": {"type": "string"},
        "policies": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "people": {"$ref": "#/definitions/policy"},
                "government": {"$ref": "#/definitions/policy"},
            },
        },
        "countries": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["code", "population"],
                "additionalProperties": False,
                "properties": {
                    "code": {"type": "string", "pattern": "^[A-Z]{2,8}$"},
                    "population": {"type": "integer", "minimum": 0},
                    "join_day": {"type": "integer", "minimum": 0, "maximum": MAX_DAY},
                },
            },
        },
        "actors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "country"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "country": {"type": "string"},
                    "person_index": {"type": "integer", "minimum": 0},
                    "seed": {"type": "string", "pattern": "^[0-9a-fA-F]{64}$"},
                },
            },
        },
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["day", "type"],
                "properties": {
                    "day": {"type": "integer", "minimum": 0, "maximum": MAX_DAY},
                    "type": {
                        "enum": [
                            "birth", "local_transfer", "gov_transfer",
                            "donation", "checkpoint", "advance_day",
                        ],
                    },
                },
            },
        },
    },
    "definitions": {
        "amount": {
            "oneOf": [
                {"type": "integer", "minimum": 0},
                {"type": "string", "pattern": "^[0-9]+(\\.[0-9]{1,3})?$"},
            ],
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lt_base": {"$ref": "#/definitions/amount"},
                "ct_base": {"$ref": "#/definitions/amount"},
                "c1": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "string"}]},
                "c2": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "string"}]},
                "unlock_age_days": {"type": "integer", "minimum": 0},
                "penalty_child_limit": {"type": "integer", "minimum": 0},
                "penalty_amount": {"$ref": "#/definitions/amount"},
            },
        },
    },
}

_EVENT_FIELDS = {
    "birth": {"day", "type", "country", "newborn", "parents"},
    "local_transfer": {"day", "type", "kind", "from", "to", "amount"},
    "gov_transfer": {"day", "type", "kind", "from", "to", "amount"},
    "donation": {"day", "type", "from", "to", "amount"},
    "checkpoint": {"day", "type", "country"},
    "advance_day": {"day", "type", "days"},
}


@dataclass(frozen=True)
class ActorInfo:
    name: str
    country: str
    person_index: int | None
    account: AccountId
    keypair: Keypair


@dataclass(frozen=True)
class Scenario:
    name: str
    config: SimConfig
    events: list[Event]
    actors: dict[str, ActorInfo]
    on_reject: str


def parse_amount(value) -> int:
    """Integer millicoin, or a decimal worldcoin string ("0.5" -> 500)."""
    if isinstance(value, str):
        return worldcoin_to_millicoin(value)
    return as_amount(value)


def _parse_policy(base: ChannelPolicy, overrides: dict, label: str,
                  problems: list[str]) -> ChannelPolicy:
    fields = {}
    for key in ("lt_base", "ct_base", "penalty_amount"):
        if key in overrides:
            fields[key] = parse_amount(overrides[key])
    for key in ("c1", "c2", "unlock_age_days", "penalty_child_limit"):
        if key in overrides:
            fields[key] = overrides[key]
    try:
        return replace(base, **fields)
    except Exception as exc:
        problems.append(f"policies.{label}: {exc}")
        return base


def parse_scenario(path, *, seed: int | None = None) -> Scenario:
    """Load and fully validate a scenario file.

    Raises ScenarioError carrying every problem found (with JSON paths and
    event indices); a scenario is never partially accepted. `seed` overrides
    the file's seed before identities are derived.
    """
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ScenarioError([f"{path}: {exc}"]) from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"]) from exc

    problems: list[str] = []
    validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
    for error in sorted(validator.iter_errors(doc), key=lambda e: e.json_path):
        problems.append(f"{error.json_path}: {error.message}")
    if problems:
        raise ScenarioError(problems)

    if seed is None:
        seed = doc.get("seed", 0)

    people_policy = _parse_policy(
        default_people_policy(), doc.get("policies", {}).get("people", {}),
        "people", problems)
    government_policy = _parse_policy(
        default_government_policy(), doc.get("policies", {}).get("government", {}),
        "government", problems)

    countries: list[CountrySpec] = []
    populations: dict[str, int] = {}
    join_days: dict[str, int] = {}
    for i, entry in enumerate(doc["countries"]):
        code = entry["code"]
        if code in populations:
            problems.append(f"countries[{i}]: duplicate country {code}")
            continue
        populations[code] = entry["population"]
        join_days[code] = entry.get("join_day", 0)
        countries.append(CountrySpec(code, entry["population"], entry.get("join_day", 0)))

    key_seeds: list[bytes] = []
    if "key_file" in doc:
        key_path = Path(doc["key_file"])
        if not key_path.is_absolute():
            key_path = path.parent / key_path
        try:
            key_seeds = load_seed_file(key_path)
        except (OSError, ValueError) as exc:
            problems.append(f"key_file: {exc}")

    actors: dict[str, ActorInfo] = {}
    seed_overrides: dict[tuple[str, int], bytes] = {}
    used_indices: dict[str, set[int]] = {code: set() for code in populations}
    for i, entry in enumerate(doc.get("actors", [])):
        name, country = entry["name"], entry["country"]
        if name in actors:
            problems.append(f"actors[{i}]: duplicate actor name {name!r}")
            continue
        if country not in populations:
            problems.append(f"actors[{i}]: undeclared country {country}")
            continue
        index = entry.get("person_index")
        if index is None:
            index = 0
            while index in used_indices[country]:
                index += 1
        if index >= populations[country]:
            problems.append(
                f"actors[{i}]: person_index {index} outside population "
                f"{populations[country]} of {country}")
            continue
        if index in used_indices[country]:
            problems.append(f"actors[{i}]: person_index {index} of {country} already taken")
            continue
        used_indices[country].add(index)
        if "seed" in entry:
            actor_seed = bytes.fromhex(entry["seed"])
        elif i < len(key_seeds):
            actor_seed = key_seeds[i]
        else:
            actor_seed = derive_seed("person", seed, country, index)
        seed_overrides[(country, index)] = actor_seed
        keypair, account = generate_identity(actor_seed)
        actors[name] = ActorInfo(name, country, index, account, keypair)
    if key_seeds and len(key_seeds) < len(doc.get("actors", [])):
        problems.append(
            f"key_file: {len(key_seeds)} seeds for {len(doc.get('actors', []))} actors")

    raw_events = doc.get("events", [])
    for i, (earlier, later) in enumerate(zip(raw_events, raw_events[1:])):
        if later["day"] < earlier["day"]:
            problems.append(f"events[{i + 1}]: day {later['day']} before previous "
                            f"event's day {earlier['day']} (events must be sorted)")

    events: list[Event] = []
    nonces: dict[bytes, int] = {}
    for i, entry in enumerate(raw_events):
        where = f"events[{i}]"
        etype = entry["type"]
        unknown = set(entry) - _EVENT_FIELDS[etype]
        if unknown:
            problems.append(f"{where}: unexpected fields {sorted(unknown)} for {etype}")
            continue
        day = entry["day"]
        try:
            if etype == "advance_day":
                events.append(AdvanceEvent(day=min(day + entry.get("days", 0), MAX_DAY)))
            elif etype == "checkpoint":
                country = entry["country"]
                if country not in populations:
                    problems.append(f"{where}: undeclared country {country}")
                    continue
                events.append(CheckpointEvent(day, country))
            elif etype in ("gov_transfer", "donation"):
                sender, recipient = entry["from"], entry["to"]
                missing = [c for c in (sender, recipient) if c not in populations]
                if missing:
                    problems.append(f"{where}: undeclared country {missing[0]}")
                    continue
                if sender == recipient:
                    problems.append(f"{where}: a government cannot transfer to itself")
                    continue
                kind = DONATION if etype == "donation" else entry.get("kind", SALE)
                if kind not in (SALE, DONATION):
                    problems.append(f"{where}: unknown kind {kind!r}")
                    continue
                events.append(GovTransferEvent(
                    day, sender, recipient, parse_amount(entry["amount"]), kind))
            elif etype == "local_transfer":
                sender = actors.get(entry["from"])
                recipient = actors.get(entry["to"])
                if sender is None or recipient is None:
                    missing = entry["from"] if sender is None else entry["to"]
                    problems.append(f"{where}: undeclared actor {missing!r}")
                    continue
                kind = entry.get("kind", SALE)
                if kind not in (SALE, DONATION):
                    problems.append(f"{where}: unknown kind {kind!r}")
                    continue
                nonce = nonces.get(sender.account.id, 0) + 1
                nonces[sender.account.id] = nonce
                tx = build_tx(PEOPLE, kind, sender.account, recipient.account,
                              parse_amount(entry["amount"]), day, nonce)
                tx = replace(tx, signature=sign_payload(
                    tx.canonical_bytes(), sender.keypair.secret))
                events.append(LocalTransferEvent(day, sender.country, tx))
            elif etype == "birth":
                country = entry["country"]
                if country not in populations:
                    problems.append(f"{where}: undeclared country {country}")
                    continue
                newborn_name = entry["newborn"]
                if newborn_name in actors:
                    problems.append(f"{where}: newborn name {newborn_name!r} already in use")
                    continue
                parent_names = entry["parents"]
                if not (isinstance(parent_names, list) and len(parent_names) == 2):
                    problems.append(f"{where}: parents must be a pair of actor names")
                    continue
                parents = []
                for parent_name in parent_names:
                    parent = actors.get(parent_name)
                    if parent is None:
                        problems.append(f"{where}: undeclared actor {parent_name!r}")
                    elif parent.country != country:
                        problems.append(
                            f"{where}: parent {parent_name!r} lives in {parent.country}, "
                            f"not {country}")
                    else:
                        parents.append(parent)
                if len(parents) != 2:
                    continue
                if parents[0].account.id == parents[1].account.id:
                    problems.append(f"{where}: parents must be two distinct persons")
                    continue
                newborn_seed = derive_seed("newborn", seed, country, newborn_name)
                keypair, account = generate_identity(newborn_seed)
                actors[newborn_name] = ActorInfo(newborn_name, country, None, account, keypair)
                events.append(BirthEvent(
                    day, country, account, keypair.public,
                    (parents[0].account, parents[1].account)))
        except (ValueError, ScenarioError) as exc:
            problems.append(f"{where}: {exc}")

    if problems:
        raise ScenarioError(problems)

    config = SimConfig(
        seed=seed,
        countries=tuple(countries),
        max_delay_days=doc.get("max_delay_days", 0),
        checkpoint_interval=doc.get("checkpoint_interval", 1000),
        people_policy=people_policy,
        government_policy=government_policy,
        seed_overrides=seed_overrides,
    )
    events.sort(key=lambda e: e.day)  # stable: only advance targets can move
    return Scenario(
        name=doc.get("name", path.stem),
        config=config,
        events=events,
        actors=actors,
        on_reject=doc.get("on_reject", "record"),
    )


def template_scenario() -> dict:
    """A small, runnable scenario document to start from."""
    return {
        "name": "template",
        "seed": 42,
        "max_delay_days": 1,
        "checkpoint_interval": 1000,
        "on_reject": "record",
        "countries": [
            {"code": "ALPHA", "population": 1000, "join_day": 0},
            {"code": "BRAVO", "population": 500, "join_day": 0},
            {"code": "CHARLIE", "population": 2000, "join_day": 0},
            {"code": "DELTA", "population": 100, "join_day": 3},
        ],
        "actors": [
            {"name": "alice", "country": "ALPHA"},
            {"name": "bob", "country": "ALPHA"},
            {"name": "carol", "country": "BRAVO"},
        ],
        "events": [
            {"day": 1, "type": "local_transfer", "kind": "sale",
             "from": "alice", "to": "bob", "amount": "0.3"},
            {"day": 2, "type": "birth", "country": "ALPHA",
             "newborn": "dana", "parents": ["alice", "bob"]},
            {"day": 4, "type": "donation", "from": "CHARLIE", "to": "DELTA",
             "amount": "250000"},
            {"day": 5, "type": "checkpoint", "country": "ALPHA"},
            {"day": 6, "type": "advance_day", "days": 2},
        ],
    }


# ---------------------------------------------------------------------------
# Execution and export
# ---------------------------------------------------------------------------

def execute(scenario: Scenario, out_dir) -> tuple:
    """Run a scenario and write its full state under `out_dir`.

    Produces report.json, the global chain export, per-country ledger logs,
    genesis records, checkpoint summaries, and batch archives. Returns
    (report, world).
    """
    world = World(scenario.config)
    report = world.run(scenario.events, stop_on_reject=scenario.on_reject == "fail")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _write(out / "report.json",
           json.dumps(report.to_json_dict(), indent=2) + "\n")
    _write(out / "chain.jsonl",
           "".join(line + "\n" for line in export_chain_lines(world.state.chain)))
    _write(out / "snapshot.json",
           json.dumps(_snapshot_dict(world, report), sort_keys=True, indent=2) + "\n")

    for code in sorted(world.nodes):
        node = world.nodes[code]
        ledger_dir = out / "ledgers" / code
        (ledger_dir / "batches").mkdir(parents=True, exist_ok=True)
        _write(ledger_dir / "log.jsonl",
               "".join(line + "\n" for line in node.ledger.iter_log_json()))
        _write(ledger_dir / "genesis.jsonl",
               "".join(line + "\n" for line in node.ledger.iter_genesis_json()))
        _write(ledger_dir / "summaries.jsonl", "".join(
            json.dumps(summary_to_json_dict(s), separators=(",", ":")) + "\n"
            for s in node.ledger.summaries))
        for seq_no, batch in sorted(node.ledger.batches.items()):
            _write(ledger_dir / "batches" / f"{seq_no}.jsonl", "".join(
                json.dumps(tx_to_json_dict(tx), separators=(",", ":")) + "\n"
                for tx in batch))
    return report, world


def _snapshot_dict(world: World, report) -> dict:
    accounts = {}
    for code in sorted(world.nodes):
        ledger = world.nodes[code].ledger
        rows = {}
        for account in ledger.accounts():
            view = ledger.balance_of(account, report.final_day)
            rows[account.hex] = {
                "total": view.total,
                "locked": view.locked,
                "spendable": view.spendable,
            }
        accounts[code] = rows
    return {
        "final_day": report.final_day,
        "members": sorted(world.state.members()),
        "world_supply": world.state.world_supply(),
        "gov_balances": dict(world.state.gov_balances),
        "people_supplies": dict(world.state.people_supplies),
        "government_accounts": {
            code: world.state.government_account(code).hex
            for code in world.state.members()
        },
        "supply_trace": [
            {
                "height": point.height,
                "world_supply": point.world_supply,
                "gov_balances": point.gov_balances,
                "people_supplies": point.people_supplies,
            }
            for point in world.state.supply_trace
        ],
        "accounts": accounts,
    }


def _write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)
