"""Core domain types: monetary units, identifiers, policies, accounts, transactions.

All money is counted in integer millicoin (1 worldcoin = exactly 1000
millicoin). There is no floating point anywhere on a money path: amounts are
checked unsigned 64-bit integers and threshold scaling constants are exact
rationals. Every type here is an immutable value object, safe to share freely.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

MILLICOIN_PER_WORLDCOIN = 1000
MAX_AMOUNT = 2**64 - 1

PEOPLE = "people"
GOVERNMENT = "government"

PERSON = "person"

SALE = "sale"
DONATION = "donation"
MINT_GENESIS = "mint_genesis"
MINT_BIRTH = "mint_birth"
PENALTY = "penalty"

CHANNEL_CODES = {PEOPLE: 0, GOVERNMENT: 1}
KIND_CODES = {SALE: 0, DONATION: 1, MINT_GENESIS: 2, MINT_BIRTH: 3, PENALTY: 4}
CHANNEL_NAMES = {v: k for k, v in CHANNEL_CODES.items()}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

ZERO_HASH = b"\x00" * 32


class WorldcoinError(Exception):
    """Base class for all protocol errors."""


class AmountOverflowError(WorldcoinError, ValueError):
    """Arithmetic left the representable [0, 2^64-1] millicoin range."""


class NonRepresentableError(WorldcoinError, ValueError):
    """A worldcoin quantity finer than one millicoin was requested."""


class PolicyOrderingError(WorldcoinError, ValueError):
    """Threshold parameters violate the c1*LT >= c2*CT >= 0 ordering."""


class DuplicateAccountError(WorldcoinError):
    pass


class UnknownAccountError(WorldcoinError):
    pass


class EmptyBatchError(WorldcoinError):
    pass


class AlreadyMemberError(WorldcoinError):
    pass


class NotMemberError(WorldcoinError):
    pass


class GapInSequenceError(WorldcoinError):
    pass


class ChainMismatchError(WorldcoinError):
    pass


class MissingBatchError(WorldcoinError):
    pass


class RootMismatchError(WorldcoinError):
    pass


class UnknownTxError(WorldcoinError):
    pass


class ScenarioError(WorldcoinError):
    """Aggregated scenario-file validation failure."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# ---------------------------------------------------------------------------
# Amounts
# ---------------------------------------------------------------------------

def as_amount(value: int) -> int:
    """Validate an integer millicoin amount, returning it unchanged."""
    if not isinstance(value, int) or isinstance(value, bool):
        raise AmountOverflowError(f"amount must be an integer, got {value!r}")
    if value < 0 or value > MAX_AMOUNT:
        raise AmountOverflowError(f"amount {value} outside [0, {MAX_AMOUNT}]")
    return value


def checked_add(a: int, b: int) -> int:
    c = a + b
    if c > MAX_AMOUNT:
        raise AmountOverflowError(f"{a} + {b} exceeds the maximum amount")
    return c


def checked_sub(a: int, b: int) -> int:
    if b > a:
        raise AmountOverflowError(f"{a} - {b} would be negative")
    return a - b


def checked_mul(a: int, b: int) -> int:
    c = a * b
    if c > MAX_AMOUNT:
        raise AmountOverflowError(f"{a} * {b} exceeds the maximum amount")
    return c


def worldcoin_to_millicoin(wc) -> int:
    """Convert a worldcoin quantity to integer millicoin.

    Accepts int, Fraction, Decimal, or a decimal string. Floats are converted
    through their shortest decimal representation so that e.g. 0.1 means one
    tenth. Quantities that are not a whole number of millicoin are rejected:
    a millicoin is the smallest unit.
    """
    if isinstance(wc, float):
        wc = str(wc)
    try:
        ratio = Fraction(wc)
    except (ValueError, TypeError) as exc:
        raise NonRepresentableError(f"not a worldcoin quantity: {wc!r}") from exc
    if ratio < 0:
        raise ValueError(f"worldcoin quantity must be non-negative: {wc!r}")
    scaled = ratio * MILLICOIN_PER_WORLDCOIN
    if scaled.denominator != 1:
        raise NonRepresentableError(
            f"{wc!r} worldcoin is not a whole number of millicoin"
        )
    return as_amount(int(scaled))


def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        value = str(value)
    frac = Fraction(value)
    if frac < 0:
        raise PolicyOrderingError(f"scaling constant must be non-negative: {value!r}")
    return frac


# ---------------------------------------------------------------------------
# Identifiers
# ---------------------------------------------------------------------------

def validate_country_code(code: str) -> str:
    """Country codes are 2-8 uppercase ASCII letters."""
    if not isinstance(code, str) or not (2 <= len(code) <= 8) or not code.isascii() \
            or not code.isalpha() or code != code.upper():
        raise ValueError(f"invalid country code {code!r}: need 2-8 uppercase letters")
    return code


@dataclass(frozen=True)
class AccountId:
    """32-byte pseudonymous account identifier (hash of a public key).

    Identity is the raw id bytes; `kind` is bookkeeping metadata and does not
    participate in equality or hashing.
    """

    id: bytes
    kind: str = field(default=PERSON, compare=False)

    def __post_init__(self):
        if len(self.id) != 32:
            raise ValueError(f"account id must be 32 bytes, got {len(self.id)}")
        if self.kind not in (PERSON, GOVERNMENT):
            raise ValueError(f"unknown account kind {self.kind!r}")

    @property
    def hex(self) -> str:
        return self.id.hex()

    def __repr__(self) -> str:
        return f"AccountId({self.id.hex()[:12]}…, {self.kind})"


# ---------------------------------------------------------------------------
# Channel policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelPolicy:
    """Per-channel threshold and minting parameters.

    lt_base/ct_base are base thresholds in millicoin; c1/c2 are exact rational
    scaling constants. The effective thresholds are floor(c1*lt_base) and
    floor(c2*ct_base), and construction enforces c1*lt_base >= c2*ct_base >= 0.
    The unlock/penalty fields only apply to the people channel.
    """

    channel: str
    lt_base: int
    ct_base: int
    c1: Fraction = Fraction(1)
    c2: Fraction = Fraction(1)
    unlock_age_days: int = 0
    penalty_child_limit: int = 0
    penalty_amount: int = 0
    lt_eff: int = field(init=False)
    ct_eff: int = field(init=False)

    def __post_init__(self):
        if self.channel not in (PEOPLE, GOVERNMENT):
            raise ValueError(f"unknown channel {self.channel!r}")
        as_amount(self.lt_base)
        as_amount(self.ct_base)
        as_amount(self.penalty_amount)
        if self.unlock_age_days < 0 or self.penalty_child_limit < 0:
            raise ValueError("unlock_age_days and penalty_child_limit must be >= 0")
        object.__setattr__(self, "c1", _as_fraction(self.c1))
        object.__setattr__(self, "c2", _as_fraction(self.c2))
        if self.c1 * self.lt_base < self.c2 * self.ct_base:
            raise PolicyOrderingError(
                f"c1*LT ({self.c1 * self.lt_base}) < c2*CT ({self.c2 * self.ct_base})"
            )
        object.__setattr__(self, "lt_eff", math.floor(self.c1 * self.lt_base))
        object.__setattr__(self, "ct_eff", math.floor(self.c2 * self.ct_base))


def effective_thresholds(policy: ChannelPolicy) -> tuple[int, int]:
    """Effective (limit, cutoff) thresholds in millicoin; limit >= cutoff."""
    return policy.lt_eff, policy.ct_eff


# Default people-channel constants: cutoff 100 millicoin, limit 500 millicoin,
# birth grant locked for 18 years of 365 simulated days.
DEFAULT_PEOPLE_LT = 500
DEFAULT_PEOPLE_CT = 100
DEFAULT_UNLOCK_AGE_DAYS = 18 * 365
DEFAULT_PENALTY_CHILD_LIMIT = 3
DEFAULT_PENALTY_AMOUNT = 500

# Default government-channel constants: limit 1,000,000 worldcoin; the cutoff
# keeps the people channel's CT/LT ratio of 1/5.
DEFAULT_GOVERNMENT_LT = 1_000_000 * MILLICOIN_PER_WORLDCOIN
DEFAULT_GOVERNMENT_CT = 200_000 * MILLICOIN_PER_WORLDCOIN


def default_people_policy(**overrides) -> ChannelPolicy:
    params = dict(
        channel=PEOPLE,
        lt_base=DEFAULT_PEOPLE_LT,
        ct_base=DEFAULT_PEOPLE_CT,
        unlock_age_days=DEFAULT_UNLOCK_AGE_DAYS,
        penalty_child_limit=DEFAULT_PENALTY_CHILD_LIMIT,
        penalty_amount=DEFAULT_PENALTY_AMOUNT,
    )
    params.update(overrides)
    return ChannelPolicy(**params)


def default_government_policy(**overrides) -> ChannelPolicy:
    params = dict(
        channel=GOVERNMENT,
        lt_base=DEFAULT_GOVERNMENT_LT,
        ct_base=DEFAULT_GOVERNMENT_CT,
    )
    params.update(overrides)
    return ChannelPolicy(**params)


# ---------------------------------------------------------------------------
# Accounts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Account:
    """Immutable snapshot of one account's state.

    `locked` covers only the birth grant; it expires wholesale on
    `unlock_day` (inclusive). Spendable balance is always derived as
    total - still-locked, never stored.
    """

    id: AccountId
    country: str
    total: int
    locked: int = 0
    unlock_day: int | None = None
    born_at: int | None = None
    parents: tuple[AccountId, AccountId] | None = None

    def __post_init__(self):
        as_amount(self.total)
        as_amount(self.locked)
        if self.locked > self.total:
            raise ValueError(f"locked {self.locked} exceeds total {self.total}")


# ---------------------------------------------------------------------------
# Transactions
# ---------------------------------------------------------------------------

_TX_TAIL = struct.Struct(">QQQ")


@dataclass(frozen=True, slots=True)
class Transaction:
    """A typed movement of millicoin between accounts on one channel.

    `sender is None` marks minting. System transactions (mints, penalties)
    carry no signature. `tx_id` is the SHA-256 of the canonical serialization;
    use `build_tx` so it is computed consistently.
    """

    channel: str
    kind: str
    sender: AccountId | None
    recipient: AccountId
    amount: int
    timestamp: int
    nonce: int
    signature: bytes | None
    tx_id: bytes

    def canonical_bytes(self) -> bytes:
        """Fixed-layout 90-byte serialization; the signed and hashed region."""
        return canonical_tx_bytes(
            self.channel, self.kind,
            self.sender.id if self.sender is not None else ZERO_HASH,
            self.recipient.id, self.amount, self.timestamp, self.nonce,
        )


def canonical_tx_bytes(channel: str, kind: str, sender_id: bytes,
                       recipient_id: bytes, amount: int, timestamp: int,
                       nonce: int) -> bytes:
    # channel(1) kind(1) from(32) to(32) amount(8BE) day(8BE) nonce(8BE)
    return (
        bytes((CHANNEL_CODES[channel], KIND_CODES[kind]))
        + sender_id + recipient_id
        + _TX_TAIL.pack(amount, timestamp, nonce)
    )


def build_tx(channel: str, kind: str, sender: AccountId | None,
             recipient: AccountId, amount: int, timestamp: int, nonce: int,
             signature: bytes | None = None) -> Transaction:
    """Construct a transaction, computing its id from the canonical bytes."""
    as_amount(amount)
    body = canonical_tx_bytes(
        channel, kind, sender.id if sender is not None else ZERO_HASH,
        recipient.id, amount, timestamp, nonce,
    )
    return Transaction(
        channel=channel, kind=kind, sender=sender, recipient=recipient,
        amount=amount, timestamp=timestamp, nonce=nonce, signature=signature,
        tx_id=hashlib.sha256(body).digest(),
    )


def tx_to_json_dict(tx: Transaction) -> dict:
    """Canonical JSON form with fixed field order; hashes hex, amounts int."""
    return {
        "tx_id": tx.tx_id.hex(),
        "channel": tx.channel,
        "kind": tx.kind,
        "from": tx.sender.id.hex() if tx.sender is not None else None,
        "to": tx.recipient.id.hex(),
        "amount": tx.amount,
        "timestamp": tx.timestamp,
        "nonce": tx.nonce,
        "signature": tx.signature.hex() if tx.signature is not None else None,
    }


def tx_from_json_dict(obj: dict, *, government_ids: frozenset[bytes] = frozenset()) -> Transaction:
    """Rebuild a transaction from its JSON form, verifying the stored tx_id.

    Account kinds are not part of the wire format; ids listed in
    `government_ids` are tagged as government accounts, the rest as persons.
    """
    def _account(hexid: str | None) -> AccountId | None:
        if hexid is None:
            return None
        raw = bytes.fromhex(hexid)
        kind = GOVERNMENT if raw in government_ids else PERSON
        return AccountId(raw, kind)

    tx = build_tx(
        channel=obj["channel"], kind=obj["kind"],
        sender=_account(obj["from"]),
        recipient=_account(obj["to"]),
        amount=as_amount(obj["amount"]),
        timestamp=obj["timestamp"], nonce=obj["nonce"],
        signature=bytes.fromhex(obj["signature"]) if obj["signature"] else None,
    )
    if tx.tx_id.hex() != obj["tx_id"]:
        raise ChainMismatchError(f"tx_id mismatch for {obj['tx_id']}")
    return tx
