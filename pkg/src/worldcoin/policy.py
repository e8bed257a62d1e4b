"""Stateless validation and minting rules.

This module decides, it never mutates: ledgers feed it immutable account
snapshots and apply (or drop) the transactions it emits.

Transfer validation applies four rules in a fixed order, and the order is
part of the contract because a rejection carries exactly one reason:

1. people-channel transfers must stay within one country;
2. a sender below the cutoff threshold (CT) may not debit at all, and no
   debit may leave the sender below CT;
3. the debit must be covered by the spendable (unlocked) balance;
4. a seller below the limit threshold (LT) may sell only to buyers whose
   balance is not over LT. Donations are exempt from the LT rule.

Receiving is never a reason for rejection; credits are unconditional.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    MAX_AMOUNT,
    MILLICOIN_PER_WORLDCOIN,
    PEOPLE,
    SALE,
    MINT_BIRTH,
    PENALTY,
    Account,
    AccountId,
    ChannelPolicy,
    Transaction,
    build_tx,
    checked_add,
    checked_mul,
)

# One worldcoin to the government and one to the newborn, per birth.
BIRTH_GRANT = MILLICOIN_PER_WORLDCOIN

# Rejection reasons, in the order the rules are checked.
CROSS_COUNTRY = "CrossCountryLocal"
BELOW_CUTOFF = "BelowCutoff"
INSUFFICIENT_SPENDABLE = "InsufficientSpendable"
LOCKED_FUNDS = "LockedFunds"
WOULD_BREACH_CUTOFF = "WouldBreachCutoff"
BUYER_TOO_RICH = "LimitThresholdBuyerTooRich"
OVERFLOW = "Overflow"

REJECT_REASONS = (
    CROSS_COUNTRY, BELOW_CUTOFF, INSUFFICIENT_SPENDABLE, LOCKED_FUNDS,
    WOULD_BREACH_CUTOFF, BUYER_TOO_RICH, OVERFLOW,
)


@dataclass(frozen=True, slots=True)
class TransferDecision:
    allow: bool
    reason: str | None = None

    def __post_init__(self):
        if self.allow == (self.reason is not None):
            raise ValueError("rejections carry exactly one reason, approvals none")


ALLOW = TransferDecision(True)


@dataclass(frozen=True)
class Allocation:
    """Genesis grant breakdown for one joining country."""

    population: int
    government_grant: int
    per_person_grant: int
    total_minted: int

    def __post_init__(self):
        expected = checked_add(
            self.government_grant,
            checked_mul(self.per_person_grant, self.population),
        )
        if self.total_minted != expected:
            raise ValueError(
                f"allocation does not add up: {self.total_minted} != {expected}"
            )


def genesis_allocation(population: int) -> Allocation:
    """Free coins at join: one per citizen to the government, one to each
    citizen; twice the population in total."""
    if population < 0:
        raise ValueError("population must be >= 0")
    grant = checked_mul(population, MILLICOIN_PER_WORLDCOIN)
    return Allocation(
        population=population,
        government_grant=grant,
        per_person_grant=MILLICOIN_PER_WORLDCOIN,
        total_minted=checked_mul(2, grant) if population else 0,
    )


def spendable(account: Account, now: int) -> int:
    """Balance available for debits: the lock expires wholesale on the
    unlock day (inclusive)."""
    if account.unlock_day is None or now >= account.unlock_day:
        return account.total
    return account.total - account.locked


def validate_transfer(sender: Account, receiver: Account, amount: int,
                      kind: str, policy: ChannelPolicy, now: int) -> TransferDecision:
    """Decide a transfer. Rule breaches come back as decisions, never raises."""
    lt_eff = policy.lt_eff
    ct_eff = policy.ct_eff
    total = sender.total
    if policy.channel == PEOPLE and sender.country != receiver.country:
        return TransferDecision(False, CROSS_COUNTRY)
    if total < ct_eff:
        return TransferDecision(False, BELOW_CUTOFF)
    if spendable(sender, now) < amount:
        if total < amount:
            return TransferDecision(False, INSUFFICIENT_SPENDABLE)
        return TransferDecision(False, LOCKED_FUNDS)
    if total - amount < ct_eff:
        return TransferDecision(False, WOULD_BREACH_CUTOFF)
    if kind == SALE and total < lt_eff and receiver.total > lt_eff:
        return TransferDecision(False, BUYER_TOO_RICH)
    if receiver.total + amount > MAX_AMOUNT:
        return TransferDecision(False, OVERFLOW)
    return ALLOW


def _birth_nonce(newborn: AccountId) -> int:
    # System transactions sit outside the per-sender nonce ladder; deriving
    # the nonce from the newborn id keeps tx ids unique without ledger state.
    return int.from_bytes(newborn.id[:8], "big")


def birth_mint(country: str, newborn: AccountId, parents: tuple[AccountId, AccountId],
               now: int, government: AccountId) -> list[Transaction]:
    """The two mint transactions of a birth: one worldcoin to the government,
    one in the newborn's name (the ledger locks the newborn's grant)."""
    nonce = _birth_nonce(newborn)
    return [
        build_tx(PEOPLE, MINT_BIRTH, None, government, BIRTH_GRANT, now, nonce),
        build_tx(PEOPLE, MINT_BIRTH, None, newborn, BIRTH_GRANT, now, nonce),
    ]


def assess_penalty(parents: tuple[Account, Account], child_count_after_birth: int,
                   policy: ChannelPolicy, government: AccountId, newborn: AccountId,
                   now: int) -> list[Transaction]:
    """Flat per-birth penalty once the same parents exceed the child limit.

    Each parent pays min(penalty_amount, total - CT), clamped at zero, to
    the government; zero-amount penalties are not emitted. Proceeds stay
    within the country, so world supply is unchanged.
    """
    if child_count_after_birth <= policy.penalty_child_limit or policy.penalty_amount == 0:
        return []
    nonce = _birth_nonce(newborn)
    out = []
    for parent in parents:
        clamped = min(policy.penalty_amount, max(parent.total - policy.ct_eff, 0))
        if clamped > 0:
            out.append(build_tx(PEOPLE, PENALTY, parent.id, government, clamped, now, nonce))
    return out
