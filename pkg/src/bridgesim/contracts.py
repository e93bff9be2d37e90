"""Contract state machines for the two-way peg.

Token chain side:
  * ``BridgeHead``   -- per-side-chain lock/unlock vault; runs the registration
                        quorum and the outbound-unlock quorum.
  * ``ChainIdRegistry`` -- singleton registry of side-chain ids, guarded by an
                        n-of-m owner multisig that grants bridge heads a
                        standing authorization to append.

Gasless side chain:
  * ``RegistrationVault`` -- pre-funded vault paid out (in full) to the creator
                        once the witnesses confirm registration; then suicides
                        by owner multisig.
  * ``InterRelay``   -- entry point for both transfer directions; delegates all
                        token movement to the reserve bank.
  * ``ReserveBank``  -- pre-funded vault backing later inbound transfers.  The
                        only address that may move its funds is the relay, via
                        a standing owner-multisig authorization.

Native-gas side chain:
  * ``ConsensusGateway`` -- merged registration/transfer consensus contract.
  * ``TradingBook``  -- the token ledger of a native-gas chain; all business
                        transfers go through it, and its column sum must equal
                        the bridge head's locked amount at rest.

Every quorum is tallied per (round, subject digest): one vote per witness per
round, votes from other rounds are rejected, and a subject only ever executes
once.  Per-event origin keys make payouts exactly-once even across merged
resend batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import codec
from .chain import (
    Address,
    ApplyContext,
    Confirm,
    EventTopic,
    MultisigAction,
    RegistrationRequest,
    TradingAction,
    Transaction,
    TransferEntry,
    Transferring,
    UserTransfer,
)

POKE_ACTION = "poke"

REGISTRATION = "registration"
INBOUND = "inbound"
OUTBOUND = "outbound"

MODE_CONSERVATION = "conservation"
MODE_STRICT = "strict"


class ContractError(Exception):
    """Base for contract-level rejections; the transaction is excluded."""


class AlreadyRegistered(ContractError):
    pass


class RequestPending(ContractError):
    pass


class BelowEntranceFeeMinimum(ContractError):
    pass


class UnknownWitness(ContractError):
    pass


class StaleRound(ContractError):
    pass


class MalformedVote(ContractError):
    pass


class MultisigIncomplete(ContractError):
    pass


class NonzeroBalance(ContractError):
    pass


class AlreadySuicided(ContractError):
    pass


class NotAuthorized(ContractError):
    pass


class NotRegistered(ContractError):
    pass


class SafetyGateViolation(ContractError):
    pass


class ExceedsCirculating(ContractError):
    pass


class ExceedsLocked(ContractError):
    pass


class InsufficientLedgerBalance(ContractError):
    pass


class UnexpectedValue(ContractError):
    pass


def _require_no_value(tx: Transaction) -> None:
    if tx.value:
        raise UnexpectedValue(f"{tx.payload.TAG} must not carry value")


def entries_subject(direction: str, entries: tuple[TransferEntry, ...]) -> bytes:
    """Digest binding a relay batch to its exact content."""
    return codec.digest(
        {"direction": direction, "entries": [e.canonical() for e in entries]}
    )


def registration_subject(
    chain_id: Address, genesis_hash: bytes, balance: int, side_creator: Address, origin: tuple
) -> bytes:
    return codec.digest(
        {
            "kind": REGISTRATION,
            "chain_id": chain_id,
            "genesis_hash": genesis_hash,
            "balance": balance,
            "side_creator": side_creator,
            "origin": list(origin),
        }
    )


@dataclass
class QuorumTally:
    """Votes collected for one subject within the stream's current round."""

    subject: bytes
    yes: set[Address] = field(default_factory=set)
    no: set[Address] = field(default_factory=set)
    entries: tuple[TransferEntry, ...] = ()

    def voters(self) -> set[Address]:
        return self.yes | self.no


@dataclass
class QuorumStream:
    """One consensus lane of a contract (registration, inbound or outbound).

    The round is a monotone instance counter: it advances whenever the lane
    concludes (success, failure or timeout), and votes carrying any other
    round number are rejected, which is what keeps stragglers and replays from
    pooling across consensus instances.
    """

    name: str
    threshold: int
    timeout: int
    round: int = 0
    deadline: int | None = None
    tallies: dict[bytes, QuorumTally] = field(default_factory=dict)
    executed: set[bytes] = field(default_factory=set)

    def check_round(self, tx_round: int | None) -> None:
        if tx_round is None:
            raise MalformedVote(f"{self.name}: vote without a round")
        if tx_round != self.round:
            raise StaleRound(f"{self.name}: round {tx_round} != current {self.round}")

    def record(
        self,
        witness: Address,
        subject: bytes,
        verdict: bool,
        now: int,
        entries: tuple[TransferEntry, ...] = (),
    ) -> QuorumTally:
        tally = self.tallies.get(subject)
        if tally is None:
            tally = QuorumTally(subject=subject, entries=entries)
            self.tallies[subject] = tally
        if self.deadline is None and self.timeout > 0:
            self.deadline = now + self.timeout
        (tally.yes if verdict else tally.no).add(witness)
        return tally

    def reached(self, tally: QuorumTally) -> bool:
        return len(tally.yes) >= self.threshold

    def conclude(self, subject: bytes | None = None) -> int:
        """Close the current round; returns the new round number."""
        if subject is not None:
            self.executed.add(subject)
        self.round += 1
        self.deadline = None
        self.tallies.clear()
        return self.round

    def expired(self, now: int) -> bool:
        return self.deadline is not None and now >= self.deadline


@dataclass
class Multisig:
    """n-of-m owner approvals collected per action; fires once at the n-th."""

    owners: tuple[Address, ...]
    required: int
    approvals: dict[bytes, set[Address]] = field(default_factory=dict)
    completed: set[bytes] = field(default_factory=set)

    def approve(self, owner: Address, action_key: bytes) -> bool:
        """Record one approval; True exactly when the action becomes ready."""
        if owner not in self.owners:
            raise NotAuthorized(f"{owner} is not an owner")
        if action_key in self.completed:
            return False
        got = self.approvals.setdefault(action_key, set())
        got.add(owner)
        if len(got) >= self.required:
            self.completed.add(action_key)
            return True
        return False

    def check(self, approvals: set[Address], action: str) -> None:
        if len(approvals & set(self.owners)) < self.required:
            raise MultisigIncomplete(
                f"{action}: {len(approvals & set(self.owners))} of {self.required} approvals"
            )


def action_key(action: str, args: tuple) -> bytes:
    return codec.digest({"action": action, "args": list(args)})


def _addr_arg(raw: object) -> Address:
    return raw if isinstance(raw, Address) else Address.from_hex(str(raw))


# ---------------------------------------------------------------------------
# Token-chain contracts
# ---------------------------------------------------------------------------


@dataclass
class PendingRegistration:
    chain_id: Address
    genesis_hash: bytes
    balance: int
    side_creator: Address
    creator: Address
    amount: int  # attach minus compensation fee; the locked portion
    fee_pot: int
    subject: bytes


class ChainIdRegistry:
    """Singleton registry of registered side-chain ids (append-only, no dupes)."""

    def __init__(self, address: Address, owners: tuple[Address, ...], required: int) -> None:
        self.address = address
        self.multisig = Multisig(owners=owners, required=required)
        self.authorized: set[Address] = set()
        self.chain_ids: list[Address] = []

    def held_balance(self) -> int:
        return 0

    def snapshot_ids(self) -> set[Address]:
        return set(self.chain_ids)

    def handle(self, ctx: ApplyContext, tx: Transaction) -> None:
        _require_no_value(tx)
        payload = tx.payload
        if not isinstance(payload, MultisigAction):
            raise NotAuthorized(f"registry does not accept {payload.TAG}")
        if payload.action != "authorize":
            raise NotAuthorized(f"unknown registry action {payload.action}")
        if self.multisig.approve(tx.sender, action_key(payload.action, payload.args)):
            self.authorized.add(_addr_arg(payload.args[0]))

    def update(self, chain_id: Address, approvals: set[Address]) -> bool:
        """Append ``chain_id`` under an explicit owner-approval set.

        Returns True when the id was new (the success signal carried by the
        ExistOrNot event); False when it was already present.
        """
        self.multisig.check(approvals, "registry update")
        if chain_id in self.chain_ids:
            return False
        self.chain_ids.append(chain_id)
        return True

    def update_from(self, ctx: ApplyContext, caller: Address, chain_id: Address) -> bool:
        """Append via the standing authorization granted to a bridge head."""
        if caller not in self.authorized:
            raise MultisigIncomplete(f"{caller} holds no standing registry authorization")
        fresh = chain_id not in self.chain_ids
        if fresh:
            self.chain_ids.append(chain_id)
        ctx.emit(
            self.address,
            EventTopic.EXIST_OR_NOT,
            {"chain_id": chain_id, "success": fresh},
        )
        return fresh

    def state_view(self) -> dict:
        return {
            "chain_ids": [str(c) for c in self.chain_ids],
            "authorized": sorted(str(a) for a in self.authorized),
        }


class BridgeHead:
    """Per-side-chain vault on the token chain (lock, unlock, registration)."""

    def __init__(
        self,
        address: Address,
        side_chain_id: Address,
        witnesses: tuple[Address, ...],
        threshold: int,
        compensation_fee: int,
        entrance_fee_minimum: int,
        timeout: int,
        registry_address: Address,
    ) -> None:
        self.address = address
        self.side_chain_id = side_chain_id
        self.witnesses = tuple(witnesses)
        self.compensation_fee = compensation_fee
        self.entrance_fee_minimum = entrance_fee_minimum
        self.registry_address = registry_address
        # Starts with no balance; everything it ever holds arrived by lock.
        self.locked = 0
        self.fee_reserve = 0
        self.registered = False
        self.pending: PendingRegistration | None = None
        self.reg_stream = QuorumStream(REGISTRATION, threshold, timeout)
        self.out_stream = QuorumStream(OUTBOUND, threshold, timeout)
        self.executed_origins: set[tuple] = set()
        self.execution_log: list[dict] = []

    def held_balance(self) -> int:
        pot = self.pending.fee_pot if self.pending else 0
        return self.locked + self.fee_reserve + pot

    def _check_witness(self, sender: Address) -> None:
        if sender not in self.witnesses:
            raise UnknownWitness(f"{sender} not in witness list")

    # -- registration ------------------------------------------------------

    def request_registration(self, ctx: ApplyContext, tx: Transaction) -> None:
        req: RegistrationRequest = tx.payload
        if self.registered:
            raise AlreadyRegistered(f"side chain {self.side_chain_id} already registered")
        if self.pending is not None:
            raise RequestPending("a registration request is already awaiting consensus")
        if tx.value <= self.compensation_fee:
            raise BelowEntranceFeeMinimum(
                f"attached {tx.value} does not exceed compensation fee {self.compensation_fee}"
            )
        amount = tx.value - self.compensation_fee
        if amount < self.entrance_fee_minimum:
            raise BelowEntranceFeeMinimum(
                f"attached minus fee {amount} is below the entrance-fee minimum "
                f"{self.entrance_fee_minimum}"
            )
        origin = (str(ctx.chain.chain_id), ctx.height, ctx.tx_index)
        subject = registration_subject(
            req.chain_id, req.genesis_hash, req.balance, req.side_creator, origin
        )
        self.locked += amount
        self.pending = PendingRegistration(
            chain_id=req.chain_id,
            genesis_hash=req.genesis_hash,
            balance=req.balance,
            side_creator=req.side_creator,
            creator=tx.sender,
            amount=amount,
            fee_pot=self.compensation_fee,
            subject=subject,
        )
        # The revert clock starts at the request itself.
        self.reg_stream.deadline = ctx.now + self.reg_stream.timeout
        ctx.emit(
            self.address,
            EventTopic.CROSS_CHAIN_ARRIVED,
            {
                "kind": REGISTRATION,
                "chain_id": req.chain_id,
                "amount": amount,
                "balance": req.balance,
                "genesis_hash": req.genesis_hash,
                "side_creator": req.side_creator,
                "round": self.reg_stream.round,
                "subject": subject,
            },
        )

    def confirm(self, ctx: ApplyContext, tx: Transaction) -> None:
        vote: Confirm = tx.payload
        self._check_witness(tx.sender)
        self.reg_stream.check_round(tx.round)
        if vote.subject in self.reg_stream.executed:
            return
        if self.pending is None:
            raise MalformedVote("no registration awaiting confirmation")
        tally = self.reg_stream.record(tx.sender, vote.subject, vote.verdict, ctx.now)
        if vote.subject != self.pending.subject:
            return  # votes for a subject the contract never announced cannot fire
        if self.reg_stream.reached(tally):
            self._finish_registration(ctx, tally)

    def _settle_fees(self, ctx: ApplyContext, pot: int, voters: set[Address]) -> None:
        """Split a fee pot evenly among the voting witnesses, rest to the vault."""
        recipients = sorted(voters)
        if recipients:
            share = pot // len(recipients)
            for addr in recipients:
                ctx.credit(addr, share)
            pot -= share * len(recipients)
        self.fee_reserve += pot

    def _finish_registration(self, ctx: ApplyContext, tally: QuorumTally) -> None:
        pending = self.pending
        assert pending is not None
        registry: ChainIdRegistry = ctx.contract(self.registry_address)
        fresh = registry.update_from(ctx, self.address, pending.chain_id)
        votes = len(tally.yes)
        if fresh:
            self.registered = True
            self._settle_fees(ctx, pending.fee_pot, tally.voters())
            outcome = {"success": True}
        else:
            # Quorum passed but the id was taken: release the locked amount
            # back to the creator, keep only the fee.
            self.locked -= pending.amount
            ctx.credit(pending.creator, pending.amount)
            self._settle_fees(ctx, pending.fee_pot, tally.voters())
            outcome = {"success": False, "reason": "chain id already registered"}
        next_round = self.reg_stream.conclude(pending.subject)
        self.execution_log.append(
            {
                "stream": REGISTRATION,
                "round": next_round - 1,
                "subject": "0x" + pending.subject.hex(),
                "votes": votes,
                "threshold": self.reg_stream.threshold,
                "witness_count": len(self.witnesses),
                "success": outcome["success"],
            }
        )
        self.pending = None
        ctx.emit(
            self.address,
            EventTopic.REGISTRATION_RESULT,
            {
                "chain_id": pending.chain_id,
                "subject": pending.subject,
                "round": next_round - 1,
                "next_round": next_round,
                **outcome,
            },
        )

    def _revert_registration(self, ctx: ApplyContext) -> None:
        """Deadline passed without quorum: refund the creator minus the fee."""
        pending = self.pending
        assert pending is not None
        tally = self.reg_stream.tallies.get(pending.subject)
        voters = tally.voters() if tally else set()
        refund = max(pending.amount - self.compensation_fee, 0)
        revert_fee = pending.amount - refund
        self.locked -= pending.amount
        ctx.credit(pending.creator, refund)
        self._settle_fees(ctx, pending.fee_pot + revert_fee, voters)
        next_round = self.reg_stream.conclude(pending.subject)
        self.pending = None
        ctx.emit(
            self.address,
            EventTopic.REGISTRATION_RESULT,
            {
                "chain_id": pending.chain_id,
                "subject": pending.subject,
                "success": False,
                "reason": "timeout",
                "refund": refund,
                "round": next_round - 1,
                "next_round": next_round,
            },
        )

    # -- transfers ----------------------------------------------------------

    def deposit(self, ctx: ApplyContext, tx: Transaction) -> None:
        """Lock tokens for the side chain (token -> side direction)."""
        transfer: UserTransfer = tx.payload
        if not self.registered:
            raise NotRegistered("side chain is not registered yet")
        if transfer.dest is None:
            raise MalformedVote("bridge deposit needs a destination address")
        self.locked += tx.value
        # Witnesses identify the transfer by this event's own (height, seq).
        ctx.emit(
            self.address,
            EventTopic.CROSS_CHAIN_ARRIVED,
            {
                "kind": "transfer",
                "chain_id": self.side_chain_id,
                "to": transfer.dest,
                "value": tx.value,
            },
        )

    def unlock_vote(self, ctx: ApplyContext, tx: Transaction) -> None:
        """Witness relay of side-chain lock events; unlocks here at quorum."""
        relay: Transferring = tx.payload
        self._check_witness(tx.sender)
        self.out_stream.check_round(tx.round)
        if relay.subject in self.out_stream.executed:
            self._emit_consensus(ctx, OUTBOUND, self.out_stream.round - 1, relay.subject,
                                 success=True, origins=[], duplicate=True)
            return
        if entries_subject(OUTBOUND, relay.entries) != relay.subject:
            raise MalformedVote("subject digest does not match the carried entries")
        tally = self.out_stream.record(tx.sender, relay.subject, True, ctx.now, relay.entries)
        if not self.out_stream.reached(tally):
            return
        fresh = [e for e in tally.entries if e.origin_plain() not in self.executed_origins]
        total = sum(e.value for e in fresh)
        round_no = self.out_stream.round
        votes = len(tally.yes)
        if total > self.locked:
            next_round = self.out_stream.conclude(relay.subject)
            self._emit_consensus(ctx, OUTBOUND, round_no, relay.subject, success=False,
                                 origins=[], error=f"unlock {total} exceeds locked {self.locked}",
                                 next_round=next_round)
            return
        for e in fresh:
            self.locked -= e.value
            ctx.credit(e.to, e.value)
            self.executed_origins.add(e.origin_plain())
        next_round = self.out_stream.conclude(relay.subject)
        self.execution_log.append(
            {
                "stream": OUTBOUND,
                "round": round_no,
                "subject": "0x" + relay.subject.hex(),
                "votes": votes,
                "threshold": self.out_stream.threshold,
                "witness_count": len(self.witnesses),
                "success": True,
            }
        )
        self._emit_consensus(ctx, OUTBOUND, round_no, relay.subject, success=True,
                             origins=[e.origin_plain() for e in tally.entries],
                             next_round=next_round)

    def _emit_consensus(self, ctx, stream, round_no, subject, *, success, origins,
                        error=None, duplicate=False, next_round=None):
        payload = {
            "stream": stream,
            "round": round_no,
            "next_round": self.out_stream.round if next_round is None else next_round,
            "subject": subject,
            "success": success,
            "origins": origins,
            "duplicate": duplicate,
        }
        if error:
            payload["error"] = error
        ctx.emit(self.address, EventTopic.CONSENSUS_RESULT, payload)

    def poke(self, ctx: ApplyContext, tx: Transaction) -> None:
        if self.pending is not None and self.reg_stream.expired(ctx.now):
            self._revert_registration(ctx)
        if self.out_stream.expired(ctx.now):
            round_no = self.out_stream.round
            next_round = self.out_stream.conclude()
            self._emit_consensus(ctx, OUTBOUND, round_no, b"", success=False, origins=[],
                                 error="timeout", next_round=next_round)

    def has_expired_deadline(self, now: int) -> bool:
        return (self.pending is not None and self.reg_stream.expired(now)) or \
            self.out_stream.expired(now)

    def handle(self, ctx: ApplyContext, tx: Transaction) -> None:
        payload = tx.payload
        if isinstance(payload, RegistrationRequest):
            self.request_registration(ctx, tx)
        elif isinstance(payload, Confirm):
            _require_no_value(tx)
            self.confirm(ctx, tx)
        elif isinstance(payload, Transferring):
            _require_no_value(tx)
            if payload.direction != OUTBOUND:
                raise MalformedVote(f"bridge head takes no {payload.direction} relays")
            self.unlock_vote(ctx, tx)
        elif isinstance(payload, UserTransfer):
            self.deposit(ctx, tx)
        elif isinstance(payload, MultisigAction) and payload.action == POKE_ACTION:
            _require_no_value(tx)
            self.poke(ctx, tx)
        else:
            raise NotAuthorized(f"bridge head does not accept {payload.TAG}")

    def state_view(self) -> dict:
        return {
            "locked": self.locked,
            "fee_reserve": self.fee_reserve,
            "registered": self.registered,
            "pending": None if self.pending is None else "0x" + self.pending.subject.hex(),
            "reg_round": self.reg_stream.round,
            "out_round": self.out_stream.round,
        }


# ---------------------------------------------------------------------------
# Gasless side-chain contracts
# ---------------------------------------------------------------------------


class RegistrationVault:
    """Holds the entrance reserve until the registration quorum releases it."""

    def __init__(
        self,
        address: Address,
        balance: int,
        witnesses: tuple[Address, ...],
        threshold: int,
        timeout: int,
        owners: tuple[Address, ...],
        required: int,
    ) -> None:
        self.address = address
        self.balance = balance
        self.witnesses = tuple(witnesses)
        self.suicided = False
        self.multisig = Multisig(owners=owners, required=required)
        self.stream = QuorumStream(REGISTRATION, threshold, timeout)
        self.execution_log: list[dict] = []

    def held_balance(self) -> int:
        return self.balance

    def transferring(self, ctx: ApplyContext, tx: Transaction) -> None:
        relay: Transferring = tx.payload
        if self.suicided:
            raise AlreadySuicided("vault has been deactivated")
        if tx.sender not in self.witnesses:
            raise UnknownWitness(f"{tx.sender} not in witness list")
        self.stream.check_round(tx.round)
        if relay.subject in self.stream.executed:
            ctx.emit(self.address, EventTopic.REGISTRATION_RESULT,
                     {"success": True, "subject": relay.subject, "duplicate": True,
                      "round": self.stream.round - 1, "next_round": self.stream.round})
            return
        if entries_subject(REGISTRATION, relay.entries) != relay.subject:
            raise MalformedVote("subject digest does not match the carried entries")
        tally = self.stream.record(tx.sender, relay.subject, True, ctx.now, relay.entries)
        if not self.stream.reached(tally):
            return
        round_no = self.stream.round
        votes = len(tally.yes)
        if len(tally.entries) != 1 or tally.entries[0].value != self.balance:
            next_round = self.stream.conclude(relay.subject)
            ctx.emit(self.address, EventTopic.REGISTRATION_RESULT,
                     {"success": False, "subject": relay.subject,
                      "error": "payout must equal the vault balance exactly",
                      "round": round_no, "next_round": next_round})
            return
        payout = tally.entries[0]
        self.balance = 0
        ctx.credit(payout.to, payout.value)
        next_round = self.stream.conclude(relay.subject)
        self.execution_log.append(
            {
                "stream": REGISTRATION,
                "round": round_no,
                "subject": "0x" + relay.subject.hex(),
                "votes": votes,
                "threshold": self.stream.threshold,
                "witness_count": len(self.witnesses),
                "success": True,
            }
        )
        ctx.emit(self.address, EventTopic.REGISTRATION_RESULT,
                 {"success": True, "subject": relay.subject, "to": payout.to,
                  "amount": payout.value, "origins": [payout.origin_plain()],
                  "round": round_no, "next_round": next_round})

    def suicide(self, ctx: ApplyContext, tx: Transaction) -> None:
        if self.suicided:
            raise AlreadySuicided("vault already deactivated")
        if self.multisig.approve(tx.sender, action_key("suicide", ())):
            if self.balance != 0:
                raise NonzeroBalance(f"vault still holds {self.balance}")
            self.suicided = True

    def suicide_direct(self, approvals: set[Address]) -> None:
        """Deactivate under an explicit owner-approval set (one-shot form)."""
        if self.suicided:
            raise AlreadySuicided("vault already deactivated")
        self.multisig.check(approvals, "suicide")
        if self.balance != 0:
            raise NonzeroBalance(f"vault still holds {self.balance}")
        self.suicided = True

    def poke(self, ctx: ApplyContext, tx: Transaction) -> None:
        if self.stream.expired(ctx.now):
            round_no = self.stream.round
            next_round = self.stream.conclude()
            ctx.emit(self.address, EventTopic.REGISTRATION_RESULT,
                     {"success": False, "error": "timeout", "subject": b"",
                      "round": round_no, "next_round": next_round})

    def has_expired_deadline(self, now: int) -> bool:
        return self.stream.expired(now)

    def handle(self, ctx: ApplyContext, tx: Transaction) -> None:
        _require_no_value(tx)
        payload = tx.payload
        if isinstance(payload, Transferring):
            if payload.direction != REGISTRATION:
                raise MalformedVote(f"vault takes no {payload.direction} relays")
            self.transferring(ctx, tx)
        elif isinstance(payload, MultisigAction) and payload.action == "suicide":
            self.suicide(ctx, tx)
        elif isinstance(payload, MultisigAction) and payload.action == POKE_ACTION:
            self.poke(ctx, tx)
        else:
            raise NotAuthorized(f"vault does not accept {payload.TAG}")

    def state_view(self) -> dict:
        return {"balance": self.balance, "suicided": self.suicided,
                "round": self.stream.round}


class ReserveBank:
    """Pre-funded side-chain vault; only the relay may move its balance.

    The relay's standing authorization is normally written into the genesis
    state (the access control is part of the chain's pre-definition); the
    owner multisig can also install or replace it at runtime.
    """

    def __init__(
        self,
        address: Address,
        balance: int,
        owners: tuple[Address, ...],
        required: int,
        authorized_relay: Address | None = None,
    ) -> None:
        self.address = address
        self.balance = balance
        self.multisig = Multisig(owners=owners, required=required)
        self.authorized_relay = authorized_relay
        self.access_violations: list[str] = []

    def held_balance(self) -> int:
        return self.balance

    def handle(self, ctx: ApplyContext, tx: Transaction) -> None:
        _require_no_value(tx)
        payload = tx.payload
        if isinstance(payload, MultisigAction) and payload.action == "add_relay":
            if self.multisig.approve(tx.sender, action_key(payload.action, payload.args)):
                self.authorized_relay = _addr_arg(payload.args[0])
            return
        raise NotAuthorized("only the relay may interact with the bank")

    def _check_caller(self, caller: Address) -> None:
        if self.authorized_relay is None or caller != self.authorized_relay:
            self.access_violations.append(str(caller))
            raise NotAuthorized(f"{caller} is not the authorized relay")

    def lock_from_relay(self, ctx: ApplyContext, caller: Address,
                        dest: Address, value: int) -> None:
        self._check_caller(caller)
        self.balance += value
        ctx.emit(self.address, EventTopic.ASSETS_LOCKED, {"to": dest, "value": value})

    def unlock_from_relay(self, ctx: ApplyContext, caller: Address,
                          to: Address, value: int) -> None:
        self._check_caller(caller)
        if value > self.balance:
            raise SafetyGateViolation(f"unlock {value} exceeds bank balance {self.balance}")
        self.balance -= value
        ctx.credit(to, value)

    def state_view(self) -> dict:
        return {
            "balance": self.balance,
            "authorized_relay": str(self.authorized_relay) if self.authorized_relay else None,
        }


class InterRelay:
    """Side-chain entry point for both directions of the peg."""

    def __init__(
        self,
        address: Address,
        bank_address: Address,
        witnesses: tuple[Address, ...],
        threshold: int,
        timeout: int,
        total_supply: int,
        entrance_reserve: int,
        mode: str = MODE_CONSERVATION,
    ) -> None:
        self.address = address
        self.bank_address = bank_address
        self.witnesses = tuple(witnesses)
        self.total_supply = total_supply
        self.entrance_reserve = entrance_reserve
        self.mode = mode
        self.stream = QuorumStream(INBOUND, threshold, timeout)
        self.executed_origins: set[tuple] = set()
        self.execution_log: list[dict] = []

    def held_balance(self) -> int:
        return 0  # every token it receives is forwarded to the bank in the same tx

    # Outbound: user locks tokens for the token chain.
    def outbound(self, ctx: ApplyContext, tx: Transaction) -> None:
        transfer: UserTransfer = tx.payload
        if transfer.dest is None:
            raise MalformedVote("outbound transfer needs a token-chain destination")
        bank: ReserveBank = ctx.contract(self.bank_address)
        bound = self.total_supply - bank.balance
        if tx.value > bound:
            raise ExceedsCirculating(
                f"outbound {tx.value} exceeds circulating bound {bound}"
            )
        bank.lock_from_relay(ctx, self.address, transfer.dest, tx.value)

    # Inbound: witness quorum releases bank funds to side accounts.
    def inbound_vote(self, ctx: ApplyContext, tx: Transaction) -> None:
        relay: Transferring = tx.payload
        if tx.sender not in self.witnesses:
            raise UnknownWitness(f"{tx.sender} not in witness list")
        self.stream.check_round(tx.round)
        if relay.subject in self.stream.executed:
            ctx.emit(self.address, EventTopic.CONSENSUS_RESULT,
                     {"stream": INBOUND, "success": True, "subject": relay.subject,
                      "origins": [], "duplicate": True,
                      "round": self.stream.round - 1, "next_round": self.stream.round})
            return
        if entries_subject(INBOUND, relay.entries) != relay.subject:
            raise MalformedVote("subject digest does not match the carried entries")
        tally = self.stream.record(tx.sender, relay.subject, True, ctx.now, relay.entries)
        if not self.stream.reached(tally):
            return
        bank: ReserveBank = ctx.contract(self.bank_address)
        fresh = [e for e in tally.entries if e.origin_plain() not in self.executed_origins]
        round_no = self.stream.round
        votes = len(tally.yes)
        error = self._gate_error(bank, fresh)
        if error is not None:
            next_round = self.stream.conclude(relay.subject)
            ctx.emit(self.address, EventTopic.CONSENSUS_RESULT,
                     {"stream": INBOUND, "success": False, "subject": relay.subject,
                      "error": error, "origins": [], "duplicate": False,
                      "round": round_no, "next_round": next_round})
            return
        for e in fresh:
            bank.unlock_from_relay(ctx, self.address, e.to, e.value)
            self.executed_origins.add(e.origin_plain())
        next_round = self.stream.conclude(relay.subject)
        self.execution_log.append(
            {
                "stream": INBOUND,
                "round": round_no,
                "subject": "0x" + relay.subject.hex(),
                "votes": votes,
                "threshold": self.stream.threshold,
                "witness_count": len(self.witnesses),
                "success": True,
            }
        )
        ctx.emit(self.address, EventTopic.CONSENSUS_RESULT,
                 {"stream": INBOUND, "success": True, "subject": relay.subject,
                  "origins": [e.origin_plain() for e in tally.entries],
                  "duplicate": False, "round": round_no, "next_round": next_round})

    def _gate_error(self, bank: ReserveBank, fresh: list[TransferEntry]) -> str | None:
        total = sum(e.value for e in fresh)
        if total > bank.balance:
            return f"unlock {total} exceeds bank balance {bank.balance}"
        if self.mode == MODE_STRICT:
            # Literal ledger identity: the bank balance after the unlock plus
            # the entrance reserve plus the requested amount must reproduce
            # the total supply.  This holds only while no prior disbursement
            # has happened, so strict mode admits exactly one net drawdown.
            running = bank.balance
            for e in fresh:
                post = running - e.value
                if post + self.entrance_reserve + e.value != self.total_supply:
                    return (
                        f"strict gate: bank {post} + entrance {self.entrance_reserve} "
                        f"+ {e.value} != supply {self.total_supply}"
                    )
                running = post
        return None

    def poke(self, ctx: ApplyContext, tx: Transaction) -> None:
        if self.stream.expired(ctx.now):
            round_no = self.stream.round
            next_round = self.stream.conclude()
            ctx.emit(self.address, EventTopic.CONSENSUS_RESULT,
                     {"stream": INBOUND, "success": False, "subject": b"",
                      "error": "timeout", "origins": [], "duplicate": False,
                      "round": round_no, "next_round": next_round})

    def has_expired_deadline(self, now: int) -> bool:
        return self.stream.expired(now)

    def handle(self, ctx: ApplyContext, tx: Transaction) -> None:
        payload = tx.payload
        if isinstance(payload, UserTransfer):
            self.outbound(ctx, tx)
        elif isinstance(payload, Transferring):
            _require_no_value(tx)
            if payload.direction != INBOUND:
                raise MalformedVote(f"relay takes no {payload.direction} batches")
            self.inbound_vote(ctx, tx)
        elif isinstance(payload, MultisigAction) and payload.action == POKE_ACTION:
            _require_no_value(tx)
            self.poke(ctx, tx)
        else:
            raise NotAuthorized(f"relay does not accept {payload.TAG}")

    def state_view(self) -> dict:
        return {"round": self.stream.round, "mode": self.mode}


# ---------------------------------------------------------------------------
# Native-gas side-chain contracts
# ---------------------------------------------------------------------------


class TradingBook:
    """Token ledger of a native-gas side chain.

    All business transfers go through this book; its column sum must equal the
    bridge head's locked amount for the chain whenever the bridge is at rest.
    """

    def __init__(
        self,
        address: Address,
        chain_id: Address,
        owners: tuple[Address, ...],
        required: int,
        authorized_gateway: Address | None = None,
    ) -> None:
        self.address = address
        self.chain_id = chain_id
        self.balances: dict[Address, int] = {}
        self.multisig = Multisig(owners=owners, required=required)
        self.authorized_gateway = authorized_gateway

    def held_balance(self) -> int:
        return 0

    def ledger_sum(self) -> int:
        return sum(self.balances.values())

    def transfer(self, sender: Address, to: Address, value: int) -> None:
        have = self.balances.get(sender, 0)
        if value > have:
            raise InsufficientLedgerBalance(f"{sender} holds {have} < {value}")
        self.balances[sender] = have - value
        self.balances[to] = self.balances.get(to, 0) + value

    def handle(self, ctx: ApplyContext, tx: Transaction) -> None:
        _require_no_value(tx)
        payload = tx.payload
        if isinstance(payload, TradingAction) and not payload.cross_chain:
            self.transfer(tx.sender, payload.to, payload.value)
            return
        if isinstance(payload, MultisigAction) and payload.action == "authorize_gateway":
            if self.multisig.approve(tx.sender, action_key(payload.action, payload.args)):
                self.authorized_gateway = _addr_arg(payload.args[0])
            return
        raise NotAuthorized(f"trading book does not accept {payload.TAG}")

    def _check_caller(self, caller: Address) -> None:
        if self.authorized_gateway is None or caller != self.authorized_gateway:
            raise NotAuthorized(f"{caller} is not the authorized gateway")

    def credit_from_gateway(self, caller: Address, to: Address, value: int) -> None:
        self._check_caller(caller)
        self.balances[to] = self.balances.get(to, 0) + value

    def debit_from_gateway(self, caller: Address, user: Address, value: int) -> None:
        self._check_caller(caller)
        have = self.balances.get(user, 0)
        if value > have:
            raise InsufficientLedgerBalance(f"{user} holds {have} < {value}")
        self.balances[user] = have - value

    def state_view(self) -> dict:
        return {
            "balances": {str(a): v for a, v in sorted(self.balances.items())},
            "gateway": str(self.authorized_gateway) if self.authorized_gateway else None,
        }


class ConsensusGateway:
    """Merged registration/transfer consensus contract for native-gas chains."""

    def __init__(
        self,
        address: Address,
        trading_address: Address,
        witnesses: tuple[Address, ...],
        threshold: int,
        timeout: int,
    ) -> None:
        self.address = address
        self.trading_address = trading_address
        self.witnesses = tuple(witnesses)
        self.streams = {
            REGISTRATION: QuorumStream(REGISTRATION, threshold, timeout),
            INBOUND: QuorumStream(INBOUND, threshold, timeout),
            OUTBOUND: QuorumStream(OUTBOUND, threshold, timeout),
        }
        self.escrow_total = 0
        self.executed_origins: set[tuple] = set()
        self.execution_log: list[dict] = []

    def held_balance(self) -> int:
        return 0

    def side_token_total(self, trading: TradingBook) -> int:
        return trading.ledger_sum() + self.escrow_total

    def _check_witness(self, sender: Address) -> None:
        if sender not in self.witnesses:
            raise UnknownWitness(f"{sender} not in witness list")

    def withdraw_request(self, ctx: ApplyContext, tx: Transaction) -> None:
        """User starts a side->token transfer; the amount moves into escrow."""
        action: TradingAction = tx.payload
        trading: TradingBook = ctx.contract(self.trading_address)
        trading.debit_from_gateway(self.address, tx.sender, action.value)
        self.escrow_total += action.value
        ctx.emit(self.address, EventTopic.CROSS_CHAIN_ARRIVED,
                 {"kind": "transfer", "direction": OUTBOUND,
                  "to": action.to, "value": action.value})

    def relay_vote(self, ctx: ApplyContext, tx: Transaction) -> None:
        relay: Transferring = tx.payload
        self._check_witness(tx.sender)
        stream = self.streams.get(relay.direction)
        if stream is None:
            raise MalformedVote(f"unknown direction {relay.direction}")
        stream.check_round(tx.round)
        if relay.subject in stream.executed:
            self._emit_result(ctx, stream, stream.round - 1, relay.subject,
                              success=True, origins=[], duplicate=True,
                              next_round=stream.round)
            return
        if entries_subject(relay.direction, relay.entries) != relay.subject:
            raise MalformedVote("subject digest does not match the carried entries")
        tally = stream.record(tx.sender, relay.subject, True, ctx.now, relay.entries)
        if not stream.reached(tally):
            return
        self._execute(ctx, stream, tally)

    def _execute(self, ctx: ApplyContext, stream: QuorumStream, tally: QuorumTally) -> None:
        trading: TradingBook = ctx.contract(self.trading_address)
        fresh = [e for e in tally.entries if e.origin_plain() not in self.executed_origins]
        round_no = stream.round
        votes = len(tally.yes)
        if stream.name == OUTBOUND:
            total = sum(e.value for e in fresh)
            if total > self.escrow_total:
                next_round = stream.conclude(tally.subject)
                self._emit_result(ctx, stream, round_no, tally.subject, success=False,
                                  origins=[], error="escrow underflow", next_round=next_round)
                return
            for e in fresh:
                self.escrow_total -= e.value
                self.executed_origins.add(e.origin_plain())
                ctx.emit(self.address, EventTopic.ASSETS_LOCKED,
                         {"to": e.to, "value": e.value, "origin": list(e.origin_plain())})
        else:
            for e in fresh:
                trading.credit_from_gateway(self.address, e.to, e.value)
                self.executed_origins.add(e.origin_plain())
        next_round = stream.conclude(tally.subject)
        self.execution_log.append(
            {
                "stream": stream.name,
                "round": round_no,
                "subject": "0x" + tally.subject.hex(),
                "votes": votes,
                "threshold": stream.threshold,
                "witness_count": len(self.witnesses),
                "success": True,
            }
        )
        if stream.name == REGISTRATION:
            ctx.emit(self.address, EventTopic.REGISTRATION_RESULT,
                     {"success": True, "subject": tally.subject,
                      "origins": [e.origin_plain() for e in tally.entries],
                      "round": round_no, "next_round": next_round})
        else:
            self._emit_result(ctx, stream, round_no, tally.subject, success=True,
                              origins=[e.origin_plain() for e in tally.entries],
                              next_round=next_round)

    def _emit_result(self, ctx, stream, round_no, subject, *, success, origins,
                     error=None, duplicate=False, next_round=None):
        payload = {
            "stream": stream.name,
            "round": round_no,
            "next_round": stream.round if next_round is None else next_round,
            "subject": subject,
            "success": success,
            "origins": origins,
            "duplicate": duplicate,
        }
        if error:
            payload["error"] = error
        ctx.emit(self.address, EventTopic.CONSENSUS_RESULT, payload)

    def poke(self, ctx: ApplyContext, tx: Transaction) -> None:
        for name in (REGISTRATION, INBOUND, OUTBOUND):
            stream = self.streams[name]
            if stream.expired(ctx.now):
                round_no = stream.round
                next_round = stream.conclude()
                if name == REGISTRATION:
                    ctx.emit(self.address, EventTopic.REGISTRATION_RESULT,
                             {"success": False, "error": "timeout", "subject": b"",
                              "round": round_no, "next_round": next_round})
                else:
                    self._emit_result(ctx, stream, round_no, b"", success=False,
                                      origins=[], error="timeout", next_round=next_round)

    def has_expired_deadline(self, now: int) -> bool:
        return any(s.expired(now) for s in self.streams.values())

    def handle(self, ctx: ApplyContext, tx: Transaction) -> None:
        _require_no_value(tx)
        payload = tx.payload
        if isinstance(payload, TradingAction) and payload.cross_chain:
            self.withdraw_request(ctx, tx)
        elif isinstance(payload, Transferring):
            self.relay_vote(ctx, tx)
        elif isinstance(payload, MultisigAction) and payload.action == POKE_ACTION:
            self.poke(ctx, tx)
        else:
            raise NotAuthorized(f"gateway does not accept {payload.TAG}")

    def state_view(self) -> dict:
        return {
            "escrow": self.escrow_total,
            "rounds": {k: s.round for k, s in self.streams.items()},
        }
