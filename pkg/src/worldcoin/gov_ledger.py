"""Global government channel: a hash-chained ledger replicated to every member.

Blocks record country joins, government-to-government transfers and
donations, and checkpoint anchors summarizing local activity. The chain
grows with joins, transfers, and checkpoints only; it never sees individual
local transactions, which is the whole throughput argument of the design.

Ordering is provided by a single logical sequencer (the simulation scheduler
assigns a total order to global submissions); consensus protocols and fork
handling are deliberately out of scope.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .core import (
    DONATION,
    SALE,
    GOVERNMENT,
    ZERO_HASH,
    Account,
    AccountId,
    AlreadyMemberError,
    ChainMismatchError,
    ChannelPolicy,
    GapInSequenceError,
    NotMemberError,
    Transaction,
    build_tx,
    checked_add,
    checked_mul,
    checked_sub,
    default_government_policy,
    tx_from_json_dict,
    tx_to_json_dict,
    validate_country_code,
)
from .identity import Keypair, government_identity, sign_payload
from .people_ledger import CheckpointSummary, summary_from_json_dict, summary_to_json_dict
from .policy import genesis_allocation, validate_transfer

NOT_MEMBER = "NotMember"


@dataclass(frozen=True)
class Join:
    country: str
    population: int
    day: int


@dataclass(frozen=True)
class GovTransfer:
    tx: Transaction


@dataclass(frozen=True)
class CheckpointAnchor:
    summary: CheckpointSummary


Payload = Join | GovTransfer | CheckpointAnchor


@dataclass(frozen=True)
class GlobalBlock:
    """One hash-chained entry; block_hash covers (height, prev_hash, payload)."""

    height: int
    prev_hash: bytes
    payload: Payload
    block_hash: bytes


def payload_to_json_dict(payload: Payload) -> dict:
    if isinstance(payload, Join):
        return {
            "type": "join",
            "country": payload.country,
            "population": payload.population,
            "day": payload.day,
        }
    if isinstance(payload, GovTransfer):
        return {"type": "gov_transfer", "tx": tx_to_json_dict(payload.tx)}
    if isinstance(payload, CheckpointAnchor):
        return {"type": "checkpoint", "summary": summary_to_json_dict(payload.summary)}
    raise TypeError(f"unknown payload {payload!r}")


def payload_from_json_dict(obj: dict, government_ids: frozenset[bytes]) -> Payload:
    kind = obj["type"]
    if kind == "join":
        return Join(obj["country"], obj["population"], obj["day"])
    if kind == "gov_transfer":
        return GovTransfer(tx_from_json_dict(obj["tx"], government_ids=government_ids))
    if kind == "checkpoint":
        return CheckpointAnchor(summary_from_json_dict(obj["summary"]))
    raise ChainMismatchError(f"unknown block payload type {kind!r}")


def _hash_region(height: int, prev_hash: bytes, payload: Payload) -> bytes:
    region = {
        "height": height,
        "prev_hash": prev_hash.hex(),
        "payload": payload_to_json_dict(payload),
    }
    return json.dumps(region, separators=(",", ":")).encode()


def build_block(height: int, prev_hash: bytes, payload: Payload) -> GlobalBlock:
    digest = hashlib.sha256(_hash_region(height, prev_hash, payload)).digest()
    return GlobalBlock(height, prev_hash, payload, digest)


def block_to_json_line(block: GlobalBlock) -> str:
    obj = {
        "height": block.height,
        "prev_hash": block.prev_hash.hex(),
        "payload": payload_to_json_dict(block.payload),
        "block_hash": block.block_hash.hex(),
    }
    return json.dumps(obj, separators=(",", ":"))


def export_chain_lines(chain: Iterable[GlobalBlock]) -> Iterator[str]:
    for block in chain:
        yield block_to_json_line(block)


def import_chain(lines: Iterable[str]) -> list[GlobalBlock]:
    """Parse an exported chain, recomputing and checking every hash and link.

    Returns blocks whose recomputed hashes are bit-identical to the stored
    ones; any divergence raises ChainMismatchError.
    """
    chain: list[GlobalBlock] = []
    gov_ids: set[bytes] = set()
    prev_hash = ZERO_HASH
    for height, line in enumerate(lines):
        obj = json.loads(line)
        if obj["height"] != height:
            raise ChainMismatchError(f"height {obj['height']} where {height} expected")
        payload = payload_from_json_dict(obj["payload"], frozenset(gov_ids))
        block = build_block(height, bytes.fromhex(obj["prev_hash"]), payload)
        if block.block_hash.hex() != obj["block_hash"]:
            raise ChainMismatchError(f"block {height}: stored hash does not match payload")
        if block.prev_hash != prev_hash:
            raise ChainMismatchError(f"block {height}: broken prev_hash link")
        if isinstance(payload, Join):
            gov_ids.add(government_identity(payload.country)[1].id)
        chain.append(block)
        prev_hash = block.block_hash
    return chain


@dataclass(frozen=True, slots=True)
class GovCommitResult:
    accepted: bool
    reason: str | None
    block: GlobalBlock | None


@dataclass(frozen=True)
class HoldingsRow:
    country: str
    gov_balance: int
    people_supply: int
    share: float


@dataclass(frozen=True)
class SupplyPoint:
    """Per-height record of the replicated balance view."""

    height: int
    world_supply: int
    gov_balances: dict[str, int]
    people_supplies: dict[str, int]


@dataclass
class _Member:
    country: str
    population: int
    join_day: int
    account: AccountId
    keypair: Keypair = field(repr=False)


class WorldState:
    """The sequenced global ledger and the balance view derived from it.

    Single logical writer; committed blocks are immutable and may be read
    (or replicated) concurrently. Government balances and per-country people
    supplies are updated only by blocks: joins credit both sides with the
    genesis allocation, transfers move government balances, and each anchored
    checkpoint credits its birth mints (the person-side aggregate to the
    people supply and the mirrored government halves to the government
    balance).
    """

    def __init__(self, policy: ChannelPolicy | None = None):
        self.policy = policy if policy is not None else default_government_policy()
        if self.policy.channel != GOVERNMENT:
            raise ValueError("WorldState needs a government-channel policy")
        self.chain: list[GlobalBlock] = []
        self.gov_balances: dict[str, int] = {}
        self.people_supplies: dict[str, int] = {}
        self.supply_trace: list[SupplyPoint] = []
        self._members: dict[str, _Member] = {}
        self._next_anchor_seq: dict[str, int] = {}
        self._prev_anchor_hash: dict[str, bytes] = {}
        self._gov_nonce: dict[str, int] = {}

    # -- membership -----------------------------------------------------

    def members(self) -> list[str]:
        return list(self._members)

    def is_member(self, country: str) -> bool:
        return country in self._members

    def government_account(self, country: str) -> AccountId:
        return self._require(country).account

    def population(self, country: str) -> int:
        return self._require(country).population

    def _require(self, country: str) -> _Member:
        member = self._members.get(country)
        if member is None:
            raise NotMemberError(f"{country} has not joined")
        return member

    # -- block producers --------------------------------------------------

    def join_country(self, country: str, population: int, day: int) -> GlobalBlock:
        """Admit a country: one Join block, genesis grants on both sides."""
        validate_country_code(country)
        if country in self._members:
            raise AlreadyMemberError(f"{country} already joined")
        allocation = genesis_allocation(population)
        keypair, account = government_identity(country)
        block = self._append(Join(country, population, day))
        self._members[country] = _Member(country, population, day, account, keypair)
        self.gov_balances[country] = allocation.government_grant
        self.people_supplies[country] = checked_mul(
            allocation.per_person_grant, population,
        )
        self._next_anchor_seq[country] = 0
        self._prev_anchor_hash[country] = ZERO_HASH
        self._gov_nonce[country] = 0
        self._trace()
        return block

    def submit_gov_transfer(self, sender_country: str, recipient_country: str,
                            amount: int, kind: str, day: int) -> GovCommitResult:
        """Sequence one government sale or donation; policy rejections are data."""
        if kind not in (SALE, DONATION):
            raise ValueError(f"government transfers are sales or donations, not {kind!r}")
        if sender_country == recipient_country:
            raise ValueError("a government cannot transfer to itself")
        if sender_country not in self._members or recipient_country not in self._members:
            return GovCommitResult(False, NOT_MEMBER, None)
        sender = self._members[sender_country]
        recipient = self._members[recipient_country]
        decision = validate_transfer(
            self._gov_view(sender), self._gov_view(recipient),
            amount, kind, self.policy, day,
        )
        if not decision.allow:
            return GovCommitResult(False, decision.reason, None)
        nonce = self._gov_nonce[sender_country] + 1
        tx = build_tx(GOVERNMENT, kind, sender.account, recipient.account,
                      amount, day, nonce)
        tx = replace(tx, signature=sign_payload(tx.canonical_bytes(), sender.keypair.secret))
        self._gov_nonce[sender_country] = nonce
        block = self._append(GovTransfer(tx))
        self.gov_balances[sender_country] = checked_sub(
            self.gov_balances[sender_country], amount)
        self.gov_balances[recipient_country] = checked_add(
            self.gov_balances[recipient_country], amount)
        self._trace()
        return GovCommitResult(True, None, block)

    def anchor_checkpoint(self, summary: CheckpointSummary) -> GlobalBlock:
        """Anchor a local checkpoint; anchors are accepted only in sequence."""
        country = summary.country
        if country not in self._members:
            raise NotMemberError(f"{country} has not joined")
        expected_seq = self._next_anchor_seq[country]
        if summary.seq_no != expected_seq:
            raise GapInSequenceError(
                f"{country}: anchor seq {summary.seq_no}, expected {expected_seq}")
        if summary.prev_summary_hash != self._prev_anchor_hash[country]:
            raise ChainMismatchError(f"{country}: summary chain does not link")
        block = self._append(CheckpointAnchor(summary))
        self._next_anchor_seq[country] = expected_seq + 1
        self._prev_anchor_hash[country] = summary.summary_hash()
        # Each birth minted one coin to the newborn (aggregated in `minted`)
        # and one to the government; credit both sides here.
        self.people_supplies[country] = checked_add(
            self.people_supplies[country], summary.minted)
        self.gov_balances[country] = checked_add(
            self.gov_balances[country], summary.minted)
        self._trace()
        return block

    def _append(self, payload: Payload) -> GlobalBlock:
        prev = self.chain[-1].block_hash if self.chain else ZERO_HASH
        block = build_block(len(self.chain), prev, payload)
        self.chain.append(block)
        return block

    def _trace(self) -> None:
        self.supply_trace.append(SupplyPoint(
            height=len(self.chain) - 1,
            world_supply=self.world_supply(),
            gov_balances=dict(self.gov_balances),
            people_supplies=dict(self.people_supplies),
        ))

    def _gov_view(self, member: _Member) -> Account:
        return Account(member.account, member.country, self.gov_balances[member.country])

    # -- transparency queries ---------------------------------------------

    def world_supply(self) -> int:
        """How many millicoin currently exist, per the replicated view."""
        return sum(self.gov_balances.values()) + sum(self.people_supplies.values())

    def holdings_report(self) -> list[HoldingsRow]:
        """Per-country balances and world share; rows sum to world_supply."""
        total = self.world_supply()
        rows = []
        for country in self._members:
            gov = self.gov_balances[country]
            people = self.people_supplies[country]
            share = (gov + people) / total if total else 0.0
            rows.append(HoldingsRow(country, gov, people, share))
        return rows
