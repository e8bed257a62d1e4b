"""Per-country people channel: the authoritative local ledger.

One LocalLedger instance per country, one logical writer. It accepts signed
person-to-person transactions, applies the transfer policy atomically, and
periodically seals the committed-but-unsummarized tail into a Merkle-committed
checkpoint summary. Sealed batches are archived by sequence number so any
summary can later be expanded back into its individual transactions.

Government accounts hold no balance here: the gov half of a birth mint and
penalty proceeds are recorded in the log (they are part of the forensic
record and of every checkpoint commitment) but the authoritative government
balances live on the global ledger.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Callable, Iterator

from .core import (
    DONATION,
    GOVERNMENT,
    MINT_BIRTH,
    MINT_GENESIS,
    PENALTY,
    PEOPLE,
    PERSON,
    SALE,
    ZERO_HASH,
    Account,
    AccountId,
    ChannelPolicy,
    DuplicateAccountError,
    EmptyBatchError,
    Transaction,
    UnknownAccountError,
    build_tx,
    checked_add,
    checked_sub,
    tx_to_json_dict,
)
from .identity import verify_payload
from .merkle import merkle_root
from .policy import BIRTH_GRANT, assess_penalty, birth_mint, spendable, validate_transfer

BAD_SIGNATURE = "BadSignature"
UNKNOWN_ACCOUNT = "UnknownAccount"
DUPLICATE_NONCE = "DuplicateNonce"

_SUMMARY_TAIL = struct.Struct(">QQ")


@dataclass(frozen=True)
class CheckpointSummary:
    """Merkle commitment plus flow aggregates over one sealed batch.

    `minted` counts the person-side half of birth mints in the batch (the
    government half mirrors it by construction); `volume` is the total
    amount moved by transfers (sales, donations, penalties).
    """

    country: str
    seq_no: int
    tx_count: int
    merkle_root: bytes
    minted: int
    volume: int
    prev_summary_hash: bytes
    day: int

    def canonical_bytes(self) -> bytes:
        code = self.country.encode()
        return (
            bytes((len(code),)) + code
            + _SUMMARY_TAIL.pack(self.seq_no, self.tx_count)
            + self.merkle_root
            + _SUMMARY_TAIL.pack(self.minted, self.volume)
            + self.prev_summary_hash
            + self.day.to_bytes(8, "big")
        )

    def summary_hash(self) -> bytes:
        return hashlib.sha256(self.canonical_bytes()).digest()


def summary_to_json_dict(summary: CheckpointSummary) -> dict:
    return {
        "country": summary.country,
        "seq_no": summary.seq_no,
        "tx_count": summary.tx_count,
        "merkle_root": summary.merkle_root.hex(),
        "minted": summary.minted,
        "volume": summary.volume,
        "prev_summary_hash": summary.prev_summary_hash.hex(),
        "day": summary.day,
    }


def summary_from_json_dict(obj: dict) -> CheckpointSummary:
    return CheckpointSummary(
        country=obj["country"],
        seq_no=obj["seq_no"],
        tx_count=obj["tx_count"],
        merkle_root=bytes.fromhex(obj["merkle_root"]),
        minted=obj["minted"],
        volume=obj["volume"],
        prev_summary_hash=bytes.fromhex(obj["prev_summary_hash"]),
        day=obj["day"],
    )


@dataclass(frozen=True, slots=True)
class CommitResult:
    accepted: bool
    reason: str | None
    tx: Transaction | None


@dataclass(frozen=True)
class BalanceView:
    total: int
    locked: int
    spendable: int


class LocalLedger:
    """Account state, append-only log, and checkpoint machinery for one country.

    Rejections come back as CommitResult data; structural misuse (wrong
    channel, duplicate or missing accounts on system operations) raises.
    A rejected submission leaves the ledger state bit-identical.
    """

    def __init__(self, country: str, policy: ChannelPolicy,
                 government: AccountId,
                 foreign_lookup: Callable[[bytes], str | None] | None = None):
        if policy.channel != PEOPLE:
            raise ValueError("LocalLedger needs a people-channel policy")
        self.country = country
        self.policy = policy
        self.government = government
        self.log: list[Transaction] = []
        self.pending: list[Transaction] = []
        self.next_seq = 0
        self.summaries: list[CheckpointSummary] = []
        self.batches: dict[int, list[Transaction]] = {}
        self.genesis: list[Transaction] = []
        self._prev_summary_hash = ZERO_HASH
        self._foreign_lookup = foreign_lookup
        # Per-account state, keyed by the raw 32-byte id.
        self._ids: dict[bytes, AccountId] = {}
        self._pubkey: dict[bytes, bytes] = {}
        self._total: dict[bytes, int] = {}
        self._locked: dict[bytes, int] = {}
        self._unlock: dict[bytes, int] = {}
        self._born: dict[bytes, int] = {}
        self._parents: dict[bytes, tuple[AccountId, AccountId]] = {}
        self._last_nonce: dict[bytes, int] = {}
        self._children: dict[tuple[bytes, bytes], int] = {}
        self._person_supply = 0

    # -- registration -------------------------------------------------

    def register_person(self, account: AccountId, pubkey: bytes,
                        grant: int = BIRTH_GRANT, day: int = 0) -> None:
        """Admit a person with an unlocked genesis grant."""
        if account.id in self._ids:
            raise DuplicateAccountError(f"account {account.hex} already exists")
        if account.kind != PERSON:
            raise ValueError("only person accounts live on the local ledger")
        self._ids[account.id] = account
        self._pubkey[account.id] = pubkey
        self._total[account.id] = grant
        self._person_supply = checked_add(self._person_supply, grant)
        if grant:
            self.genesis.append(build_tx(
                PEOPLE, MINT_GENESIS, None, account, grant, day,
                nonce=len(self.genesis),
            ))

    def register_birth(self, newborn: AccountId, pubkey: bytes,
                       parents: tuple[AccountId, AccountId], day: int) -> list[Transaction]:
        """Mint the two birth grants and any parent penalty.

        The newborn's grant is locked until day + unlock_age_days
        (inclusive unlock). Returns the committed transactions.
        """
        if newborn.id in self._ids:
            raise DuplicateAccountError(f"newborn {newborn.hex} already exists")
        if newborn.kind != PERSON:
            raise ValueError("newborns are person accounts")
        if parents[0].id == parents[1].id:
            raise ValueError("parents must be two distinct accounts")
        for parent in parents:
            if parent.id not in self._ids:
                raise UnknownAccountError(f"parent {parent.hex} unknown in {self.country}")
        gov_half, person_half = birth_mint(self.country, newborn, parents, day, self.government)

        self._ids[newborn.id] = newborn
        self._pubkey[newborn.id] = pubkey
        self._total[newborn.id] = person_half.amount
        self._locked[newborn.id] = person_half.amount
        self._unlock[newborn.id] = day + self.policy.unlock_age_days
        self._born[newborn.id] = day
        self._parents[newborn.id] = parents
        self._person_supply = checked_add(self._person_supply, person_half.amount)
        committed = [gov_half, person_half]

        pair = tuple(sorted((parents[0].id, parents[1].id)))
        count = self._children.get(pair, 0) + 1
        self._children[pair] = count
        parent_views = (self._view(parents[0].id, day), self._view(parents[1].id, day))
        for penalty in assess_penalty(parent_views, count, self.policy,
                                      self.government, newborn, day):
            payer = penalty.sender.id
            self._total[payer] = checked_sub(self._total[payer], penalty.amount)
            self._person_supply -= penalty.amount
            committed.append(penalty)

        self.log.extend(committed)
        self.pending.extend(committed)
        return committed

    # -- submission ---------------------------------------------------

    def submit_local_tx(self, tx: Transaction, now: int) -> CommitResult:
        """Verify, validate, and commit one signed person-to-person transfer.

        Checks run in a fixed order: sender known, signature, replay nonce,
        then the transfer policy (which also covers unknown or cross-country
        recipients). The first failed check names the rejection.
        """
        if tx.channel != PEOPLE or tx.kind not in (SALE, DONATION):
            raise ValueError(f"not a submittable people transaction: {tx.kind}")
        if tx.sender is None:
            raise ValueError("transfers need a sender")
        s = tx.sender.id
        r = tx.recipient.id
        pubkey = self._pubkey.get(s)
        if pubkey is None:
            return CommitResult(False, UNKNOWN_ACCOUNT, tx)
        if tx.signature is None or not verify_payload(tx.canonical_bytes(), tx.signature, pubkey):
            return CommitResult(False, BAD_SIGNATURE, tx)
        if tx.nonce <= self._last_nonce.get(s, 0):
            return CommitResult(False, DUPLICATE_NONCE, tx)
        receiver = self._resolve_receiver(r, now)
        if receiver is None:
            return CommitResult(False, UNKNOWN_ACCOUNT, tx)
        decision = validate_transfer(
            self._view(s, now), receiver, tx.amount, tx.kind, self.policy, now,
        )
        if not decision.allow:
            return CommitResult(False, decision.reason, tx)
        self._total[s] -= tx.amount
        self._total[r] += tx.amount
        self._last_nonce[s] = tx.nonce
        self.log.append(tx)
        self.pending.append(tx)
        return CommitResult(True, None, tx)

    def _resolve_receiver(self, raw: bytes, now: int) -> Account | None:
        if raw in self._ids:
            return self._view(raw, now)
        if self._foreign_lookup is not None:
            country = self._foreign_lookup(raw)
            if country is not None and country != self.country:
                # Balance never consulted: the cross-country rule fires first.
                return Account(AccountId(raw), country, 0)
        return None

    # -- checkpoints ----------------------------------------------------

    def seal_checkpoint(self, now: int) -> CheckpointSummary:
        """Seal the pending tail into a Merkle-committed, chained summary."""
        if not self.pending:
            raise EmptyBatchError(f"{self.country}: nothing to seal")
        batch = self.pending
        minted = 0
        volume = 0
        for tx in batch:
            if tx.kind == MINT_BIRTH:
                if tx.recipient.kind == PERSON:
                    minted += tx.amount
            elif tx.kind in (SALE, DONATION, PENALTY):
                volume += tx.amount
        summary = CheckpointSummary(
            country=self.country,
            seq_no=self.next_seq,
            tx_count=len(batch),
            merkle_root=merkle_root([tx.tx_id for tx in batch]),
            minted=minted,
            volume=volume,
            prev_summary_hash=self._prev_summary_hash,
            day=now,
        )
        self.batches[summary.seq_no] = batch
        self.summaries.append(summary)
        self.pending = []
        self.next_seq += 1
        self._prev_summary_hash = summary.summary_hash()
        return summary

    # -- views ----------------------------------------------------------

    def _view(self, raw: bytes, now: int) -> Account:
        unlock = self._unlock.get(raw)
        expired = unlock is None or now >= unlock
        return Account(
            id=self._ids[raw],
            country=self.country,
            total=self._total[raw],
            locked=0 if expired else self._locked.get(raw, 0),
            unlock_day=None if expired else unlock,
            born_at=self._born.get(raw),
            parents=self._parents.get(raw),
        )

    def account_view(self, account: AccountId, now: int) -> Account:
        if account.id not in self._ids:
            raise UnknownAccountError(f"account {account.hex} unknown in {self.country}")
        return self._view(account.id, now)

    def balance_of(self, account: AccountId, now: int) -> BalanceView:
        view = self.account_view(account, now)
        return BalanceView(view.total, view.locked, spendable(view, now))

    def has_account(self, account: AccountId) -> bool:
        return account.id in self._ids

    def public_key_of(self, account: AccountId) -> bytes:
        try:
            return self._pubkey[account.id]
        except KeyError:
            raise UnknownAccountError(f"account {account.hex} unknown in {self.country}") from None

    def expected_nonce(self, account: AccountId) -> int:
        """Smallest nonce the ledger would accept from this sender next."""
        return self._last_nonce.get(account.id, 0) + 1

    def country_people_supply(self) -> int:
        """Sum of all person-account totals, maintained incrementally."""
        return self._person_supply

    def accounts(self) -> Iterator[AccountId]:
        return iter(self._ids.values())

    # -- serialization ---------------------------------------------------

    def iter_log_json(self) -> Iterator[str]:
        """Committed log, one canonical JSON object per line."""
        for tx in self.log:
            yield json.dumps(tx_to_json_dict(tx), separators=(",", ":"))

    def iter_genesis_json(self) -> Iterator[str]:
        for tx in self.genesis:
            yield json.dumps(tx_to_json_dict(tx), separators=(",", ":"))

    def snapshot_state(self) -> bytes:
        """Canonical byte serialization of the full ledger state.

        Two ledgers are behaviorally identical iff these bytes match; used
        to prove that rejected submissions leave no trace.
        """
        state = {
            "country": self.country,
            "accounts": {
                raw.hex(): [
                    self._total[raw],
                    self._locked.get(raw, 0),
                    self._unlock.get(raw),
                    self._last_nonce.get(raw, 0),
                ]
                for raw in sorted(self._ids)
            },
            "log": [tx.tx_id.hex() for tx in self.log],
            "pending": [tx.tx_id.hex() for tx in self.pending],
            "next_seq": self.next_seq,
            "prev_summary_hash": self._prev_summary_hash.hex(),
            "person_supply": self._person_supply,
            "children": {
                "|".join(k.hex() for k in pair): n
                for pair, n in sorted(self._children.items())
            },
        }
        return json.dumps(state, sort_keys=True, separators=(",", ":")).encode()
