"""Deterministic multi-node simulation of the two-channel network.

One node per country holds the authoritative local ledger and a replica of
the global ledger. Global submissions (joins, government transfers,
checkpoint anchors) go through a single logical sequencer and the committed
blocks are broadcast to every member with seeded integer-day delays; local
transactions never leave their country's node. Identical (config, events)
always produce bit-identical reports: the seed fully determines every random
draw, message ties break on (deliver_day, send order), and replicas apply
blocks idempotently and in height order.

The simulation loop is single-threaded; the two channels only meet at
checkpoint anchors, so per-country progress is independent by construction.
"""

from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass, field

from .core import (
    DONATION,
    SALE,
    Transaction,
    ChannelPolicy,
    WorldcoinError,
    default_government_policy,
    default_people_policy,
)
from .forensics import BatchArchive
from .gov_ledger import GlobalBlock, WorldState, block_to_json_line
from .identity import derive_seed, generate_identity
from .people_ledger import LocalLedger
from .core import AccountId


@dataclass(frozen=True)
class CountrySpec:
    code: str
    population: int
    join_day: int = 0


@dataclass(frozen=True)
class SimConfig:
    """Everything a run depends on; the seed determines every random draw."""

    seed: int
    countries: tuple[CountrySpec, ...]
    max_delay_days: int = 0
    checkpoint_interval: int = 1000
    people_policy: ChannelPolicy = field(default_factory=default_people_policy)
    government_policy: ChannelPolicy = field(default_factory=default_government_policy)
    # (country, person index) -> explicit 32-byte seed, for scripted actors.
    seed_overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LocalTransferEvent:
    day: int
    country: str
    tx: Transaction


@dataclass(frozen=True)
class BirthEvent:
    day: int
    country: str
    newborn: AccountId
    newborn_pubkey: bytes
    parents: tuple[AccountId, AccountId]


@dataclass(frozen=True)
class GovTransferEvent:
    day: int
    sender: str
    recipient: str
    amount: int
    kind: str = SALE


@dataclass(frozen=True)
class CheckpointEvent:
    day: int
    country: str


@dataclass(frozen=True)
class AdvanceEvent:
    """Horizon marker: the run simulates at least through this day."""

    day: int


Event = LocalTransferEvent | BirthEvent | GovTransferEvent | CheckpointEvent | AdvanceEvent


@dataclass(frozen=True)
class Rejection:
    event_index: int
    stage: str
    reason: str


@dataclass
class SimReport:
    world_supply: int
    holdings: list
    chain_length: int
    message_count: int
    local_tx_count: int
    rejections: list[Rejection]
    converged: bool
    final_day: int
    local_tx_throughput: float

    def to_json_dict(self, include_wall: bool = True) -> dict:
        obj = {
            "world_supply": self.world_supply,
            "holdings": [
                {
                    "country": row.country,
                    "gov_balance": row.gov_balance,
                    "people_supply": row.people_supply,
                    "share": row.share,
                }
                for row in self.holdings
            ],
            "chain_length": self.chain_length,
            "message_count": self.message_count,
            "local_tx_count": self.local_tx_count,
            "rejections": [
                {"event_index": r.event_index, "stage": r.stage, "reason": r.reason}
                for r in self.rejections
            ],
            "converged": self.converged,
            "final_day": self.final_day,
        }
        if include_wall:
            # The only wall-clock dependent key; excluded from determinism checks.
            obj["local_tx_throughput"] = self.local_tx_throughput
        return obj


def person_seed(config_seed: int, country: str, index: int) -> bytes:
    return derive_seed("person", config_seed, country, index)


class Node:
    """One country: authoritative local ledger plus a global-ledger replica."""

    def __init__(self, country: str, ledger: LocalLedger):
        self.country = country
        self.ledger = ledger
        self.persons: list[AccountId] = []
        self.replica: list[GlobalBlock] = []
        self._replica_buffer: dict[int, GlobalBlock] = {}

    def apply_block(self, block: GlobalBlock) -> None:
        """Idempotent, gap-buffering replica update; duplicates are no-ops."""
        if block.height < len(self.replica):
            return
        self._replica_buffer[block.height] = block
        while len(self.replica) in self._replica_buffer:
            self.replica.append(self._replica_buffer.pop(len(self.replica)))

    def replica_bytes(self) -> bytes:
        return "\n".join(block_to_json_line(b) for b in self.replica).encode()


@dataclass(frozen=True)
class Message:
    deliver_day: int
    seq: int
    target: str
    blocks: tuple[GlobalBlock, ...]
    send_day: int


class World:
    """Simulation state: sequencer, nodes, and the in-flight message queue."""

    def __init__(self, config: SimConfig):
        codes = [spec.code for spec in config.countries]
        if len(set(codes)) != len(codes):
            raise ValueError("country codes must be unique")
        self.config = config
        self.rng = random.Random(config.seed)
        self.state = WorldState(config.government_policy)
        self.nodes: dict[str, Node] = {}
        self.directory: dict[bytes, str] = {}
        self.day = 0
        self.message_count = 0
        self.local_tx_count = 0
        self.rejections: list[Rejection] = []
        self._queue: list[tuple[int, int, Message]] = []
        self._msg_seq = 0

    # -- membership -------------------------------------------------------

    def _join(self, spec: CountrySpec) -> None:
        block = self.state.join_country(spec.code, spec.population, self.day)
        government = self.state.government_account(spec.code)
        ledger = LocalLedger(
            spec.code, self.config.people_policy, government,
            foreign_lookup=self.directory.get,
        )
        node = Node(spec.code, ledger)
        for index in range(spec.population):
            seed = self.config.seed_overrides.get((spec.code, index)) \
                or person_seed(self.config.seed, spec.code, index)
            keypair, account = generate_identity(seed)
            ledger.register_person(account, keypair.public, day=self.day)
            node.persons.append(account)
            self.directory[account.id] = spec.code
        self.nodes[spec.code] = node
        # Existing members learn of the join; the joiner receives the whole
        # chain so late joiners end up with a full copy of the ledger.
        self._send(node.country, tuple(self.state.chain))
        for country in sorted(self.nodes):
            if country != node.country:
                self._send(country, (block,))

    # -- messaging ----------------------------------------------------------

    def _send(self, target: str, blocks: tuple[GlobalBlock, ...]) -> None:
        delay = self.rng.randint(0, self.config.max_delay_days) \
            if self.config.max_delay_days else 0
        self._msg_seq += 1
        message = Message(self.day + delay, self._msg_seq, target, blocks, self.day)
        heapq.heappush(self._queue, (message.deliver_day, message.seq, message))
        self.message_count += 1

    def _broadcast(self, block: GlobalBlock) -> None:
        for country in sorted(self.nodes):
            self._send(country, (block,))

    def deliver_due(self) -> list[Message]:
        """Deliver every message whose delay has elapsed, in deterministic
        (deliver_day, send order) order."""
        delivered = []
        while self._queue and self._queue[0][0] <= self.day:
            _, _, message = heapq.heappop(self._queue)
            node = self.nodes.get(message.target)
            if node is not None:
                for block in message.blocks:
                    node.apply_block(block)
            delivered.append(message)
        return delivered

    def converged(self) -> bool:
        """True iff nothing is in flight and all replicas are byte-identical
        (and equal to the sequencer's committed chain)."""
        if self._queue:
            return False
        reference = "\n".join(block_to_json_line(b) for b in self.state.chain).encode()
        return all(node.replica_bytes() == reference for node in self.nodes.values())

    # -- event execution ------------------------------------------------

    def _maybe_checkpoint(self, node: Node) -> None:
        if len(node.ledger.pending) >= self.config.checkpoint_interval:
            self._seal_and_anchor(node)

    def _seal_and_anchor(self, node: Node) -> None:
        summary = node.ledger.seal_checkpoint(self.day)
        block = self.state.anchor_checkpoint(summary)
        self._broadcast(block)

    def _execute(self, index: int, event: Event) -> None:
        if isinstance(event, AdvanceEvent):
            return
        if isinstance(event, GovTransferEvent):
            result = self.state.submit_gov_transfer(
                event.sender, event.recipient, event.amount, event.kind, self.day)
            if result.accepted:
                self._broadcast(result.block)
            else:
                self.rejections.append(Rejection(index, "gov", result.reason))
            return
        node = self.nodes.get(event.country)
        if node is None:
            self.rejections.append(Rejection(index, "local", "NotMember"))
            return
        if isinstance(event, LocalTransferEvent):
            result = node.ledger.submit_local_tx(event.tx, self.day)
            if result.accepted:
                self.local_tx_count += 1
                self._maybe_checkpoint(node)
            else:
                self.rejections.append(Rejection(index, "local", result.reason))
        elif isinstance(event, BirthEvent):
            try:
                node.ledger.register_birth(
                    event.newborn, event.newborn_pubkey, event.parents, self.day)
            except WorldcoinError as exc:
                self.rejections.append(Rejection(index, "birth", type(exc).__name__))
                return
            self.directory[event.newborn.id] = event.country
            self._maybe_checkpoint(node)
        elif isinstance(event, CheckpointEvent):
            try:
                self._seal_and_anchor(node)
            except WorldcoinError as exc:
                self.rejections.append(Rejection(index, "checkpoint", type(exc).__name__))
        else:
            raise TypeError(f"unknown event {event!r}")

    # -- main loop -----------------------------------------------------

    def run(self, events: list[Event], stop_on_reject: bool = False) -> SimReport:
        """Process events in simulated-day order, then drain to quiescence."""
        for earlier, later in zip(events, events[1:]):
            if later.day < earlier.day:
                raise ValueError("events must be sorted by day")
        joins = sorted(self.config.countries, key=lambda s: s.join_day)
        horizon = max(
            [spec.join_day for spec in joins] + [e.day for e in events] + [0],
        )
        started = time.perf_counter()
        join_ptr = 0
        event_ptr = 0
        self.day = 0
        while True:
            self.deliver_due()
            while join_ptr < len(joins) and joins[join_ptr].join_day <= self.day:
                self._join(joins[join_ptr])
                join_ptr += 1
            while event_ptr < len(events) and events[event_ptr].day <= self.day:
                before = len(self.rejections)
                self._execute(event_ptr, events[event_ptr])
                event_ptr += 1
                if stop_on_reject and len(self.rejections) > before:
                    horizon = self.day
                    event_ptr = len(events)
                    break
            self.deliver_due()
            if self.day >= horizon and not self._queue:
                break
            self.day += 1
        elapsed = time.perf_counter() - started
        return SimReport(
            world_supply=self.state.world_supply(),
            holdings=self.state.holdings_report(),
            chain_length=len(self.state.chain),
            message_count=self.message_count,
            local_tx_count=self.local_tx_count,
            rejections=list(self.rejections),
            converged=self.converged(),
            final_day=self.day,
            local_tx_throughput=self.local_tx_count / elapsed if elapsed > 0 else 0.0,
        )

    def archive(self) -> BatchArchive:
        """All sealed batches across every country, for forensic use."""
        merged = BatchArchive()
        for country in sorted(self.nodes):
            merged.merge(BatchArchive.from_ledger(self.nodes[country].ledger))
        return merged


def run_scenario(config: SimConfig, events: list[Event],
                 stop_on_reject: bool = False) -> SimReport:
    """Run a fresh world over the given events and return its report."""
    return World(config).run(events, stop_on_reject=stop_on_reject)


def deliver_step(world: World) -> list[Message]:
    """Deliver all messages due at the world's current day."""
    return world.deliver_due()


def converged(world: World) -> bool:
    return world.converged()
