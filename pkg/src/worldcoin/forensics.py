"""Backward traceability from anchored summaries to individual transactions.

Everything here is read-only over immutable archives: expand a checkpoint
back into the exact transactions it committed to, produce and check Merkle
inclusion proofs, and audit the whole world's supply from first principles.
Stored aggregates are treated as claims to verify, never as inputs to trust,
so every leaf hash is recomputed from canonical transaction bytes.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    MINT_BIRTH,
    PERSON,
    MissingBatchError,
    RootMismatchError,
    Transaction,
    UnknownTxError,
    tx_from_json_dict,
)
from .gov_ledger import (
    CheckpointAnchor,
    GlobalBlock,
    GovTransfer,
    Join,
    SupplyPoint,
    build_block,
)
from .identity import government_identity, verify_payload
from .merkle import fold_siblings, merkle_root, merkle_siblings
from .people_ledger import CheckpointSummary, summary_from_json_dict
from .policy import BIRTH_GRANT


@dataclass(frozen=True)
class InclusionProof:
    """Sibling path binding one transaction to an anchored Merkle root."""

    leaf_index: int
    siblings: tuple[tuple[bytes, str], ...]


def proof_to_json_dict(proof: InclusionProof) -> dict:
    return {
        "leaf_index": proof.leaf_index,
        "siblings": [{"hash": h.hex(), "side": side} for h, side in proof.siblings],
    }


def proof_from_json_dict(obj: dict) -> InclusionProof:
    return InclusionProof(
        leaf_index=obj["leaf_index"],
        siblings=tuple(
            (bytes.fromhex(item["hash"]), item["side"]) for item in obj["siblings"]
        ),
    )


class BatchArchive:
    """Sealed batches and their summaries, keyed by (country, seq_no)."""

    def __init__(self):
        self._batches: dict[tuple[str, int], list[Transaction]] = {}
        self._summaries: dict[tuple[str, int], CheckpointSummary] = {}

    def put(self, summary: CheckpointSummary, txs: Sequence[Transaction]) -> None:
        key = (summary.country, summary.seq_no)
        self._batches[key] = list(txs)
        self._summaries[key] = summary

    def batch(self, country: str, seq_no: int) -> list[Transaction] | None:
        return self._batches.get((country, seq_no))

    def summary(self, country: str, seq_no: int) -> CheckpointSummary | None:
        return self._summaries.get((country, seq_no))

    def keys(self) -> list[tuple[str, int]]:
        return sorted(self._batches)

    @classmethod
    def from_ledger(cls, ledger) -> "BatchArchive":
        archive = cls()
        for summary in ledger.summaries:
            archive.put(summary, ledger.batches[summary.seq_no])
        return archive

    def merge(self, other: "BatchArchive") -> None:
        self._batches.update(other._batches)
        self._summaries.update(other._summaries)


def _leaf_hashes(txs: Iterable[Transaction]) -> list[bytes]:
    # Recomputed from content, not taken from the stored tx_id field.
    return [hashlib.sha256(tx.canonical_bytes()).digest() for tx in txs]


def trace_checkpoint(summary: CheckpointSummary, archive: BatchArchive) -> list[Transaction]:
    """Expand a summary into its transactions, in commit order.

    The batch is accepted only if the Merkle root recomputed from the
    archived transactions equals the committed root; any divergence means
    tampering or corruption.
    """
    txs = archive.batch(summary.country, summary.seq_no)
    if txs is None:
        raise MissingBatchError(f"no archived batch {summary.country}/{summary.seq_no}")
    if len(txs) != summary.tx_count or merkle_root(_leaf_hashes(txs)) != summary.merkle_root:
        raise RootMismatchError(
            f"batch {summary.country}/{summary.seq_no} does not match its commitment")
    return list(txs)


def prove_inclusion(archive: BatchArchive, country: str, seq_no: int,
                    tx_id: bytes) -> InclusionProof:
    """Produce the sibling path for one transaction of an archived batch."""
    txs = archive.batch(country, seq_no)
    if txs is None:
        raise MissingBatchError(f"no archived batch {country}/{seq_no}")
    for index, tx in enumerate(txs):
        if tx.tx_id == tx_id:
            leaves = _leaf_hashes(txs)
            return InclusionProof(index, tuple(merkle_siblings(leaves, index)))
    raise UnknownTxError(f"tx {tx_id.hex()} not in batch {country}/{seq_no}")


def verify_inclusion(proof: InclusionProof, leaf_tx: Transaction, root: bytes) -> bool:
    """Pure fold-and-compare; needs no archive access."""
    leaf = hashlib.sha256(leaf_tx.canonical_bytes()).digest()
    try:
        return fold_siblings(leaf, list(proof.siblings)) == root
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Supply audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditFinding:
    height: int
    code: str
    detail: str


@dataclass
class AuditReport:
    findings: list[AuditFinding] = field(default_factory=list)
    blocks_audited: int = 0
    expected_supply: int = 0
    replayed_supply: int = 0

    @property
    def ok(self) -> bool:
        return not self.findings


def audit_supply(chain: Sequence[GlobalBlock], archive: BatchArchive,
                 claimed: Sequence[SupplyPoint] | None = None) -> AuditReport:
    """Replay the chain and archives from scratch and check the supply law.

    At every height the replayed world supply must equal
    2000 millicoin x (joined population + anchored births). Chain links,
    block hashes, government-transfer signatures, anchored Merkle roots,
    and summary aggregates are all recomputed. When `claimed` per-height
    balance snapshots are given, the replayed balances are compared against
    them and the first divergent height is reported.
    """
    report = AuditReport()
    gov: dict[str, int] = {}
    people: dict[str, int] = {}
    gov_keys: dict[bytes, bytes] = {}
    gov_countries: dict[bytes, str] = {}
    joined_population = 0
    anchored_births = 0
    prev_hash = b"\x00" * 32

    def finding(height: int, code: str, detail: str) -> None:
        report.findings.append(AuditFinding(height, code, detail))

    for height, block in enumerate(chain):
        rebuilt = build_block(height, block.prev_hash, block.payload)
        if block.height != height or rebuilt.block_hash != block.block_hash:
            finding(height, "block_hash", "stored hash does not match payload")
        if block.prev_hash != prev_hash:
            finding(height, "chain_link", "prev_hash does not match previous block")
        prev_hash = block.block_hash

        payload = block.payload
        if isinstance(payload, Join):
            country = payload.country
            if country in gov:
                finding(height, "duplicate_join", country)
            else:
                keypair, account = government_identity(country)
                gov_keys[account.id] = keypair.public
                gov_countries[account.id] = country
                gov[country] = payload.population * BIRTH_GRANT
                people[country] = payload.population * BIRTH_GRANT
                joined_population += payload.population
        elif isinstance(payload, GovTransfer):
            tx = payload.tx
            sender, recipient = tx.sender, tx.recipient
            if sender is None or sender.id not in gov_keys or recipient.id not in gov_keys:
                finding(height, "unknown_government", "transfer between unknown parties")
                continue
            if tx.signature is None or not verify_payload(
                    tx.canonical_bytes(), tx.signature, gov_keys[sender.id]):
                finding(height, "signature", f"invalid signature on {tx.tx_id.hex()}")
            sender_country = gov_countries[sender.id]
            recipient_country = gov_countries[recipient.id]
            if gov[sender_country] < tx.amount:
                finding(height, "overdraft", f"{sender_country} lacks {tx.amount}")
            gov[sender_country] -= tx.amount
            gov[recipient_country] += tx.amount
        elif isinstance(payload, CheckpointAnchor):
            summary = payload.summary
            country = summary.country
            if country not in gov:
                finding(height, "anchor_before_join", country)
                continue
            try:
                txs = trace_checkpoint(summary, archive)
            except (MissingBatchError, RootMismatchError) as exc:
                finding(height, "batch", str(exc))
                continue
            minted = sum(
                tx.amount for tx in txs
                if tx.kind == MINT_BIRTH and tx.recipient.kind == PERSON
            )
            if minted != summary.minted:
                finding(height, "aggregate",
                        f"summary claims {summary.minted} minted, batch shows {minted}")
            people[country] += minted
            gov[country] += minted
            anchored_births += minted // BIRTH_GRANT

        replayed = sum(gov.values()) + sum(people.values())
        expected = 2 * BIRTH_GRANT * (joined_population + anchored_births)
        if replayed != expected:
            finding(height, "conservation",
                    f"replayed supply {replayed} != expected {expected}")
        if claimed is not None and height < len(claimed):
            point = claimed[height]
            if point.gov_balances != gov or point.people_supplies != people:
                finding(height, "claim_mismatch",
                        f"claimed balances diverge from replay at height {height}")
        report.blocks_audited = height + 1
        report.expected_supply = expected
        report.replayed_supply = replayed

    return report


# ---------------------------------------------------------------------------
# Archive loading from an exported state directory
# ---------------------------------------------------------------------------

def load_archive_dir(state_dir, government_ids: frozenset[bytes]) -> BatchArchive:
    """Rebuild a BatchArchive from `ledgers/<CC>/` exports under `state_dir`."""
    archive = BatchArchive()
    root = Path(state_dir) / "ledgers"
    if not root.is_dir():
        return archive
    for country_dir in sorted(root.iterdir()):
        summaries_path = country_dir / "summaries.jsonl"
        if not summaries_path.is_file():
            continue
        for line in summaries_path.read_text().splitlines():
            summary = summary_from_json_dict(json.loads(line))
            batch_path = country_dir / "batches" / f"{summary.seq_no}.jsonl"
            if not batch_path.is_file():
                continue
            txs = [
                tx_from_json_dict(json.loads(tx_line), government_ids=government_ids)
                for tx_line in batch_path.read_text().splitlines()
            ]
            archive.put(summary, txs)
    return archive
