"""Deterministic discrete-event scheduler.

One run is a pure function of (scenario, seed).  Time advances in integer
ticks; each tick executes fixed phases in a fixed order:

  1. scheduled events due this tick, in (tick, sequence) order -- workload
     actions entering mempools, delayed network deliveries, reorg injections,
     witness behavior changes;
  2. block production for every chain whose interval divides the tick;
  3. the witness phase (every witness steps, in roster order);
  4. the owner phase (owner daemons watch for registration success and submit
     the vault-suicide approvals);
  5. settledness bookkeeping: when the bridge is at rest, the peg invariants
     are evaluated and recorded, and the run ends at the first rest point with
     nothing left to do.

Faults exist only on the message and block channels: witness submissions can
be dropped, duplicated or delayed (seeded), chains can be reorganized, and
witness behaviors can be flipped mid-run.  No fault ever touches contract
state directly.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any

from . import codec, trace as trace_mod
from .chain import (
    Address,
    Chain,
    ChainKind,
    EventTopic,
    IoTRecord,
    MultisigAction,
    RegistrationRequest,
    TradingAction,
    Transaction,
    UserTransfer,
)
from .contracts import (
    POKE_ACTION,
    BridgeHead,
    ChainIdRegistry,
    ConsensusGateway,
    InterRelay,
    RegistrationVault,
    ReserveBank,
    TradingBook,
)
from .genesis import VARIANT_GASLESS, GenesisSpec, genesis_hash
from .scenario import Scenario, SideChainConfig, WorkloadAction
from .witness import (
    Behavior,
    FetchFailure,
    RelayCursor,
    WindowNotReady,
    WitnessConfig,
    WitnessNode,
    WorldView,
    form_batch,
)

# Scheduled-event kinds
DELIVER_TX = "deliver_tx"
WORKLOAD = "workload"
INJECT_REORG = "inject_reorg"
INJECT_FAULT = "inject_fault"


@dataclass(order=True)
class SimEvent:
    fire_tick: int
    sequence: int
    kind: str = field(compare=False)
    data: Any = field(compare=False)


@dataclass
class ChainHost:
    chain: Chain
    interval: int
    mempool: list[Transaction] = field(default_factory=list)

    def due(self, tick: int) -> bool:
        # A dormant chain (height 0, nothing queued) produces no blocks, so a
        # side chain is still at height 0 when its registration is validated;
        # once alive it produces on every interval to advance confirmations.
        if tick <= 0 or tick % self.interval != 0:
            return False
        return bool(self.mempool) or self.chain.height > 0


@dataclass
class InvariantResult:
    name: str
    chain: str
    passed: bool
    details: str = ""

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "chain": self.chain,
            "pass": self.passed,
            "details": self.details,
        }


class OwnerDaemon:
    """Watches one gasless side chain; fires the vault suicide when both the
    registry success and the vault payout are confirmed."""

    def __init__(self, side: SideChainConfig, registry_addr: Address,
                 token_id: Address, omega_token: int) -> None:
        self.side = side
        self.registry_addr = registry_addr
        self.token_id = token_id
        self.token_cursor = RelayCursor(omega=omega_token)
        self.side_cursor = RelayCursor(omega=side.omega)
        self.seen_registry_success = False
        self.seen_payout = False
        self.submitted = False

    def idle(self) -> bool:
        return self.submitted or not (self.seen_registry_success and self.seen_payout)

    def step(self, sim: "Simulation") -> list[Transaction]:
        if self.side.variant != VARIANT_GASLESS or self.submitted:
            return []
        token_chain = sim.hosts[self.token_id].chain
        side_chain = sim.hosts[self.side.chain_id].chain
        for cursor, chain, watched in (
            (self.token_cursor, token_chain, {self.registry_addr}),
            (self.side_cursor, side_chain, {self.side.genesis.register_contract}),
        ):
            while True:
                try:
                    events, _ = form_batch(cursor, chain, watched)
                except WindowNotReady:
                    break
                for ev in events:
                    if (
                        ev.topic == EventTopic.EXIST_OR_NOT
                        and ev.payload.get("success")
                        and ev.payload.get("chain_id") == str(self.side.chain_id)
                    ):
                        self.seen_registry_success = True
                    if (
                        ev.topic == EventTopic.REGISTRATION_RESULT
                        and ev.contract == self.side.genesis.register_contract
                        and ev.payload.get("success")
                        and not ev.payload.get("duplicate")
                    ):
                        self.seen_payout = True
        if self.seen_registry_success and self.seen_payout:
            self.submitted = True
            return [
                Transaction(
                    sender=owner,
                    to=self.side.genesis.register_contract,
                    value=0,
                    gasprice=0,
                    payload=MultisigAction(action="suicide"),
                )
                for owner in self.side.vault_owners
            ]
        return []


class Simulation(WorldView):
    """Builds the world from a scenario and runs it to rest (or max_ticks)."""

    def __init__(self, scenario: Scenario, threshold_override: int | None = None) -> None:
        self.scenario = scenario
        self.threshold_override = threshold_override
        self.trace = trace_mod.TraceWriter()
        self.tick = 0
        self._seq = 0
        self.events: list[SimEvent] = []
        self.inflight = 0
        self.rng_network = random.Random(f"{scenario.seed}:network")
        self._drop_streaks: dict[tuple, int] = {}
        self.resend_records = 0
        self.invariant_failures: list[InvariantResult] = []
        self.settled_checks = 0
        self.was_settled = False
        self.ended_at: int | None = None
        self.quiescent = False
        self._registry_prev: set[str] = set()

        self._build()

    # ------------------------------------------------------------------ build

    def _push(self, tick: int, kind: str, data: Any) -> None:
        self._seq += 1
        heapq.heappush(self.events, SimEvent(tick, self._seq, kind, data))

    def _build(self) -> None:
        sc = self.scenario
        token_cfg = sc.token_chain
        token_spec = {
            "Chain_ID": token_cfg.chain_id,
            "Total_Supply": token_cfg.total_supply,
            "Accounts": {str(a): v for a, v in sorted(sc.accounts.items())},
        }
        token = Chain(
            token_cfg.chain_id,
            ChainKind.TOKEN,
            codec.to_plain(token_spec),
            token_cfg.total_supply,
            dict(sc.accounts),
        )
        self.token_id = token_cfg.chain_id
        self.hosts: dict[Address, ChainHost] = {
            token_cfg.chain_id: ChainHost(token, token_cfg.block_interval)
        }
        self.registry = ChainIdRegistry(
            sc.registry.address, sc.registry.owners, sc.registry.required
        )
        token.register_contract(sc.registry.address, self.registry)
        gas_exempt_token: set[Address] = set(sc.registry.owners)

        self.bridge_heads: dict[Address, BridgeHead] = {}
        self.owner_daemons: list[OwnerDaemon] = []
        for side in sc.side_chains:
            witnesses = sc.witnesses_for(side.chain_id)
            threshold = self.threshold_override or side.bridge_head.threshold
            head = BridgeHead(
                address=side.bridge_head.address,
                side_chain_id=side.chain_id,
                witnesses=tuple(w.token_address for w in witnesses),
                threshold=threshold,
                compensation_fee=side.bridge_head.compensation_fee,
                entrance_fee_minimum=side.bridge_head.entrance_fee_minimum,
                timeout=sc.timeout,
                registry_address=sc.registry.address,
            )
            token.register_contract(side.bridge_head.address, head)
            self.bridge_heads[side.chain_id] = head
            gas_exempt_token.update(w.token_address for w in witnesses)

            side_chain = self._build_side_chain(side, threshold)
            self.hosts[side.chain_id] = ChainHost(side_chain, side.block_interval)
            self.owner_daemons.append(
                OwnerDaemon(side, sc.registry.address, token_cfg.chain_id, token_cfg.omega)
            )
        token.witness_exempt = gas_exempt_token
        token.seal_genesis()

        self.witnesses: list[WitnessNode] = []
        for entry in sc.witnesses:
            side = sc.side_chain(entry.chain_id)
            cfg = WitnessConfig(
                name=entry.name,
                token_address=entry.token_address,
                side_address=entry.side_address,
                side_chain_id=entry.chain_id,
                variant=side.variant,
                bridge_head=side.bridge_head.address,
                registry=sc.registry.address,
                vault=side.genesis.register_contract if side.variant == VARIANT_GASLESS else None,
                relay=side.genesis.inter_contract,
                bank=side.genesis.bank_contract,
                gateway=side.genesis.register_contract
                if side.variant != VARIANT_GASLESS
                else None,
                omega_token=token_cfg.omega,
                omega_side=side.omega,
                timeout=sc.timeout,
                sleep=sc.sleep,
                behavior=entry.behavior,
            )
            self.witnesses.append(WitnessNode(cfg, token_cfg.chain_id, sc.seed))

        # The registry's standing authorization for each bridge head is
        # installed through real owner transactions at tick 0, so the multisig
        # path is exercised and visible in every trace.  Side-chain standing
        # authorizations (bank relay, trading gateway) are genesis state: the
        # chain must still be at height 0 when its registration is validated.
        for side in sc.side_chains:
            for owner in sc.registry.owners:
                self._push(0, WORKLOAD, _setup_tx(
                    owner, sc.registry.address, "authorize",
                    (str(side.bridge_head.address),), token_cfg.chain_id))

        for action in sc.workload:
            self._push(action.tick, WORKLOAD, action)
        for reorg in sc.fault_plan.reorg_schedule:
            self._push(reorg.tick, INJECT_REORG, reorg)
        for change in sc.fault_plan.behavior_schedule:
            self._push(change.tick, INJECT_FAULT, change)

        self.trace.header(sc, self.threshold_override)

    def _build_side_chain(self, side: SideChainConfig, threshold: int) -> Chain:
        g = side.genesis
        if side.variant == VARIANT_GASLESS:
            chain = Chain(
                g.chain_id,
                ChainKind.GASLESS_SIDE,
                codec.to_plain(g.canonical()),
                g.total_reserved(),
            )
            vault = RegistrationVault(
                address=g.register_contract,
                balance=g.bal_resv,
                witnesses=g.witnesses,
                threshold=threshold,
                timeout=self.scenario.timeout,
                owners=side.vault_owners,
                required=side.owners_required,
            )
            bank = ReserveBank(
                address=g.bank_contract,
                balance=g.bal_bank,
                owners=side.bank_owners,
                required=side.owners_required,
                authorized_relay=g.inter_contract,
            )
            relay = InterRelay(
                address=g.inter_contract,
                bank_address=g.bank_contract,
                witnesses=g.witnesses,
                threshold=threshold,
                timeout=self.scenario.timeout,
                total_supply=g.total_reserved(),
                entrance_reserve=g.bal_resv,
                mode=self.scenario.mode,
            )
            chain.register_contract(g.register_contract, vault)
            chain.register_contract(g.bank_contract, bank)
            chain.register_contract(g.inter_contract, relay)
            chain.witness_exempt = set(g.witnesses) | set(side.vault_owners) | set(side.bank_owners)
            chain.seal_genesis()
        else:
            chain = Chain(
                g.chain_id,
                ChainKind.NATIVE_GAS_SIDE,
                codec.to_plain(g.canonical()),
                total_supply=0,
            )
            trading = TradingBook(
                address=g.trading_contract,
                chain_id=g.chain_id,
                owners=side.trading_owners,
                required=side.owners_required,
                authorized_gateway=g.register_contract,
            )
            gateway = ConsensusGateway(
                address=g.register_contract,
                trading_address=g.trading_contract,
                witnesses=g.witnesses,
                threshold=threshold,
                timeout=self.scenario.timeout,
            )
            chain.register_contract(g.trading_contract, trading)
            chain.register_contract(g.register_contract, gateway)
            chain.witness_exempt = set(g.witnesses) | set(side.trading_owners)
            chain.seal_genesis()
            for _ in range(side.initial_height):
                chain.apply_block([])
        return chain

    # -------------------------------------------------------------- WorldView

    def chain(self, chain_id: Address) -> Chain:
        return self.hosts[chain_id].chain

    def registry_ids(self) -> set[Address]:
        return self.registry.snapshot_ids()

    def fetch_genesis(self, witness: WitnessNode, chain_id: Address) -> GenesisSpec:
        if witness.config.name in self.scenario.fault_plan.fetch_fail:
            raise FetchFailure(f"{witness.config.name}: genesis store unreachable")
        host = self.hosts.get(chain_id)
        if host is None:
            raise FetchFailure(f"no chain {chain_id}")
        side = self.scenario.side_chain(chain_id)
        return side.genesis

    def side_height(self, chain_id: Address) -> int | None:
        host = self.hosts.get(chain_id)
        return None if host is None else host.chain.height

    def actual_chain_id(self, chain_id: Address) -> Address | None:
        host = self.hosts.get(chain_id)
        return None if host is None else host.chain.chain_id

    def submit(self, witness: WitnessNode, chain_id: Address, tx: Transaction) -> None:
        plan = self.scenario.fault_plan
        digest = "0x" + tx.digest().hex()
        self.trace.record(self.tick, "submit", str(chain_id), {
            "witness": witness.config.name, "tx": digest,
            "payload": tx.payload.TAG, "round": tx.round,
        })
        key = (witness.config.name, str(tx.to))
        if plan.drop_rate > 0 and self.tick >= plan.drop_start_tick:
            streak = self._drop_streaks.get(key, 0)
            if streak < plan.max_consecutive_drops and \
                    self.rng_network.random() < plan.drop_rate:
                self._drop_streaks[key] = streak + 1
                self.trace.record(self.tick, "drop", str(chain_id),
                                  {"witness": witness.config.name, "tx": digest})
                return
        self._drop_streaks[key] = 0
        delay = 1 + (self.rng_network.randint(0, plan.max_delay) if plan.max_delay else 0)
        self._push(self.tick + delay, DELIVER_TX, (chain_id, tx))
        self.inflight += 1
        if plan.dup_rate > 0 and self.rng_network.random() < plan.dup_rate:
            delay2 = 1 + (self.rng_network.randint(0, plan.max_delay) if plan.max_delay else 0)
            self._push(self.tick + delay2, DELIVER_TX, (chain_id, tx))
            self.inflight += 1
            self.trace.record(self.tick, "dup", str(chain_id),
                              {"witness": witness.config.name, "tx": digest})

    def log_batch(self, witness: WitnessNode, chain_id: Address,
                  window: tuple[int, int], count: int) -> None:
        self.trace.record(self.tick, "batch", str(chain_id), {
            "witness": witness.config.name, "window": list(window), "events": count,
        })

    def log_resend(self, witness: WitnessNode, vote, round_no: int) -> None:
        self.resend_records += 1
        self.trace.record(self.tick, "resend", str(vote.target_chain), {
            "witness": witness.config.name, "target": str(vote.target),
            "direction": vote.direction, "round": round_no,
            "subject": "0x" + vote.subject.hex(),
        })

    def log_abstain(self, witness: WitnessNode, reason: str) -> None:
        self.trace.record(self.tick, "abstain", str(self.token_id), {
            "witness": witness.config.name, "reason": reason,
        })

    # ------------------------------------------------------------------- run

    def run(self) -> "RunResult":
        sc = self.scenario
        while self.tick <= sc.max_ticks:
            self._run_tick()
            if self.ended_at is not None:
                break
            self.tick += 1
        if self.ended_at is None:
            # Ran out of ticks; evaluate invariants on whatever state remains.
            results = self.check_invariants()
            self._record_invariants(results, final=True)
            self.quiescent = False
            self.ended_at = min(self.tick, sc.max_ticks)
        self.trace.record(self.ended_at, "end", "", self._summary())
        return RunResult(self)

    def _run_tick(self) -> None:
        tick = self.tick
        while self.events and self.events[0].fire_tick <= tick:
            ev = heapq.heappop(self.events)
            self._dispatch(ev)
        for chain_id, host in self.hosts.items():
            if host.due(tick):
                self._produce(chain_id, host)
        for witness in self.witnesses:
            witness.step(self, tick)
        for daemon in self.owner_daemons:
            for tx in daemon.step(self):
                self.hosts[daemon.side.chain_id].mempool.append(tx)
                self.trace.record(tick, "submit", str(daemon.side.chain_id), {
                    "owner": str(tx.sender), "tx": "0x" + tx.digest().hex(),
                    "payload": tx.payload.TAG, "round": None,
                })
        settled = self._settled()
        if settled and not self.was_settled:
            results = self.check_invariants()
            self._record_invariants(results, final=False)
            self.settled_checks += 1
        self.was_settled = settled
        if settled and self._finished():
            self.quiescent = True
            self.ended_at = tick

    def _dispatch(self, ev: SimEvent) -> None:
        if ev.kind == DELIVER_TX:
            chain_id, tx = ev.data
            self.inflight -= 1
            self.hosts[chain_id].mempool.append(tx)
            self.trace.record(self.tick, "deliver", str(chain_id),
                              {"tx": "0x" + tx.digest().hex()})
        elif ev.kind == WORKLOAD:
            data = ev.data
            if isinstance(data, WorkloadAction):
                self._apply_action(data)
            else:  # pre-built setup transaction
                chain_id, tx = data
                self.hosts[chain_id].mempool.append(tx)
                self.trace.record(self.tick, "action", str(chain_id), {
                    "action": "setup", "tx": "0x" + tx.digest().hex(),
                    "payload": tx.payload.canonical(),
                })
        elif ev.kind == INJECT_REORG:
            spec = ev.data
            self.inject_reorg(spec.chain_id, spec.depth, set(spec.exclude))
        elif ev.kind == INJECT_FAULT:
            change = ev.data
            for witness in self.witnesses:
                if witness.config.name == change.witness:
                    witness.config.behavior = change.behavior
            self.trace.record(self.tick, "fault", "", {
                "witness": change.witness, "behavior": change.behavior.value,
            })

    def _apply_action(self, action: WorkloadAction) -> None:
        p = action.params
        sc = self.scenario
        kind = action.action
        if kind == "register":
            side = sc.side_chain(Address.from_hex(p["chain_id"]))
            genesis = side.genesis
            tx = Transaction(
                sender=Address.from_hex(p["creator"]),
                to=side.bridge_head.address,
                value=int(p["attach"]),
                gasprice=1,
                payload=RegistrationRequest(
                    chain_id=side.chain_id,
                    genesis_hash=codec.parse_hex(
                        p.get("genesis_hash", "0x" + genesis_hash(genesis).hex()),
                        length=codec.DIGEST_SIZE,
                    ),
                    balance=int(p.get("balance", genesis.total_reserved())),
                    side_creator=Address.from_hex(p["side_creator"]),
                ),
            )
            target = self.token_id
        elif kind == "deposit":
            side = sc.side_chain(Address.from_hex(p["chain_id"]))
            tx = Transaction(
                sender=Address.from_hex(p["from"]),
                to=side.bridge_head.address,
                value=int(p["value"]),
                gasprice=1,
                payload=UserTransfer(dest=Address.from_hex(p["to"])),
            )
            target = self.token_id
        elif kind == "withdraw":
            side = sc.side_chain(Address.from_hex(p["chain_id"]))
            if side.variant == VARIANT_GASLESS:
                tx = Transaction(
                    sender=Address.from_hex(p["from"]),
                    to=side.genesis.inter_contract,
                    value=int(p["value"]),
                    gasprice=1,
                    payload=UserTransfer(dest=Address.from_hex(p["to"])),
                )
            else:
                tx = Transaction(
                    sender=Address.from_hex(p["from"]),
                    to=side.genesis.register_contract,
                    value=0,
                    gasprice=1,
                    payload=TradingAction(
                        to=Address.from_hex(p["to"]), value=int(p["value"]), cross_chain=True
                    ),
                )
            target = side.chain_id
        elif kind == "trade":
            side = sc.side_chain(Address.from_hex(p["chain_id"]))
            tx = Transaction(
                sender=Address.from_hex(p["from"]),
                to=side.genesis.trading_contract,
                value=0,
                gasprice=1,
                payload=TradingAction(to=Address.from_hex(p["to"]), value=int(p["value"])),
            )
            target = side.chain_id
        elif kind == "pay":
            chain_ref = p.get("chain", "token")
            target = self.token_id if chain_ref == "token" else Address.from_hex(chain_ref)
            tx = Transaction(
                sender=Address.from_hex(p["from"]),
                to=Address.from_hex(p["to"]),
                value=int(p["value"]),
                gasprice=int(p.get("gasprice", 1)),
                payload=UserTransfer(),
            )
        elif kind == "record":
            side = sc.side_chain(Address.from_hex(p["chain_id"]))
            tx = Transaction(
                sender=Address.from_hex(p.get("from", str(side.genesis.witnesses[0]))),
                to=Address.from_hex(p.get("to", str(side.genesis.witnesses[0]))),
                value=0,
                gasprice=1,
                payload=IoTRecord(data=str(p.get("data", ""))),
            )
            target = side.chain_id
        else:  # unreachable after validation
            raise ValueError(f"unknown action {kind}")
        self.hosts[target].mempool.append(tx)
        self.trace.record(self.tick, "action", str(target), {
            "action": kind, "tx": "0x" + tx.digest().hex(), "params": codec.to_plain(
                {k: v for k, v in sorted(p.items())}
            ),
        })

    def _produce(self, chain_id: Address, host: ChainHost) -> None:
        chain = host.chain
        txs: list[Transaction] = []
        for addr in sorted(chain.contracts):
            contract = chain.contracts[addr]
            if hasattr(contract, "has_expired_deadline") and \
                    contract.has_expired_deadline(self.tick):
                txs.append(Transaction(
                    sender=addr, to=addr, value=0, gasprice=0,
                    payload=MultisigAction(action=POKE_ACTION),
                ))
        txs.extend(host.mempool)
        host.mempool = []
        block, rejections = chain.apply_block(txs, now=self.tick)
        self.trace.record(self.tick, "block", str(chain_id), {
            "height": block.height,
            "hash": block.hash,
            "txs": [tx.digest() for tx in block.transactions],
            "rejected": [
                {"tx": r.tx.digest(), "reason": r.reason} for r in rejections
            ],
            "events": [ev.canonical() for ev in block.events],
            "state": chain.state_digest(),
        })

    # ---------------------------------------------------------------- reorgs

    def inject_reorg(self, chain_id: Address, depth: int, exclude: set[str]) -> None:
        """Replace the top ``depth`` blocks, shifting surviving transactions
        one block later; ``exclude`` drops transactions from the replacement
        entirely (they also vanish from every node's view of history)."""
        chain = self.hosts[chain_id].chain
        if depth == 0:
            self.trace.record(self.tick, "reorg", str(chain_id),
                              {"depth": 0, "note": "no-op"})
            return
        removed = chain.blocks[len(chain.blocks) - depth:]
        kept: list[list[Transaction]] = [[] for _ in range(depth)]
        for i, blk in enumerate(removed):
            slot = min(i + 1, depth - 1)
            for tx in blk.transactions:
                if "0x" + tx.digest().hex() in exclude:
                    continue
                kept[slot].append(tx)
        from .chain import Block

        fork_height = chain.height - depth
        parent = chain.blocks[fork_height].hash
        replacement = []
        for i, txs in enumerate(kept):
            blk = Block(
                height=fork_height + 1 + i,
                parent_hash=parent,
                transactions=txs,
                produced_at=self.tick,
            )
            parent = blk.compute_hash()
            replacement.append(blk)
        chain.reorg(depth, replacement)
        self.trace.record(self.tick, "reorg", str(chain_id), {
            "depth": depth,
            "fork_height": fork_height,
            "excluded": sorted(exclude),
            "new_head": chain.head.hash,
            "state": chain.state_digest(),
        })

    # ------------------------------------------------------------- invariants

    def _settled(self) -> bool:
        """True when no transfer is in flight anywhere: nothing queued, no
        open tally, no unconfirmed-or-unscanned event a witness will relay."""
        if self.inflight:
            return False
        if any(host.mempool for host in self.hosts.values()):
            return False
        if any(not w.idle() for w in self.witnesses):
            return False
        if any(not d.idle() for d in self.owner_daemons):
            return False
        for host in self.hosts.values():
            for contract in host.chain.contracts.values():
                if _contract_busy(contract):
                    return False
        return not self._unscanned_triggers()

    def _unscanned_triggers(self) -> bool:
        """Any relay-worthy event not yet consumed by a live witness's scan."""
        for witness in self.witnesses:
            cfg = witness.config
            if cfg.behavior == Behavior.CRASHED:
                continue
            for chain_id, cursor in witness.cursors.items():
                chain = self.hosts[chain_id].chain
                watched = (
                    cfg.token_watched() if chain_id == self.token_id else cfg.side_watched()
                )
                for height in range(cursor.next_start, chain.height + 1):
                    for ev in chain.events_at(height):
                        if ev.contract not in watched:
                            continue
                        if ev.topic in (EventTopic.CROSS_CHAIN_ARRIVED,
                                        EventTopic.ASSETS_LOCKED):
                            return True
                        if ev.topic == EventTopic.EXIST_OR_NOT and ev.payload.get("success"):
                            return True
        return False

    def _finished(self) -> bool:
        if self.events:
            return False
        # Nothing unscanned may still trigger a reaction.
        for witness in self.witnesses:
            if witness.config.behavior == Behavior.CRASHED:
                continue
            for chain_id, cursor in witness.cursors.items():
                chain = self.hosts[chain_id].chain
                watched = (
                    witness.config.token_watched()
                    if chain_id == self.token_id
                    else witness.config.side_watched()
                )
                for height in range(cursor.next_start, chain.height + 1):
                    for ev in chain.events_at(height):
                        if ev.contract in watched:
                            return False
        for daemon in self.owner_daemons:
            if daemon.submitted or daemon.side.variant != VARIANT_GASLESS:
                continue
            token_chain = self.hosts[self.token_id].chain
            side_chain = self.hosts[daemon.side.chain_id].chain
            for cursor, chain, watched in (
                (daemon.token_cursor, token_chain, {daemon.registry_addr}),
                (daemon.side_cursor, side_chain, {daemon.side.genesis.register_contract}),
            ):
                for height in range(cursor.next_start, chain.height + 1):
                    for ev in chain.events_at(height):
                        if ev.contract in watched:
                            return False
        return True

    def check_invariants(self) -> list[InvariantResult]:
        out: list[InvariantResult] = []
        sc = self.scenario
        token = self.hosts[self.token_id].chain

        for chain_id, host in self.hosts.items():
            chain = host.chain
            if chain.has_token_ledger():
                total = chain.ledger_total()
                out.append(InvariantResult(
                    "conservation", str(chain_id),
                    total == chain.total_supply,
                    f"ledger {total}, supply {chain.total_supply}",
                ))

        for side in sc.side_chains:
            head = self.bridge_heads[side.chain_id]
            side_chain = self.hosts[side.chain_id].chain
            if side.variant == VARIANT_GASLESS:
                circulating = sum(side_chain.accounts.values())
                out.append(InvariantResult(
                    "peg_conservation", str(side.chain_id),
                    head.locked == circulating,
                    f"locked {head.locked}, circulating {circulating}",
                ))
            else:
                trading: TradingBook = side_chain.contracts[side.genesis.trading_contract]
                gateway: ConsensusGateway = side_chain.contracts[side.genesis.register_contract]
                ledgered = gateway.side_token_total(trading)
                out.append(InvariantResult(
                    "peg_trading_ledger", str(side.chain_id),
                    head.locked == ledgered,
                    f"locked {head.locked}, ledger+escrow {ledgered}",
                ))

        quorum_ok, quorum_detail = True, []
        for host in self.hosts.values():
            for contract in host.chain.contracts.values():
                for entry in getattr(contract, "execution_log", []):
                    if entry["votes"] < entry["threshold"] or \
                            entry["threshold"] * 2 <= entry["witness_count"]:
                        quorum_ok = False
                        quorum_detail.append(entry)
        out.append(InvariantResult(
            "quorum_safety", "",
            quorum_ok,
            f"{len(quorum_detail)} executions below a safe quorum" if quorum_detail else "",
        ))

        ids = [str(c) for c in self.registry.chain_ids]
        grew = set(self._registry_prev).issubset(set(ids))
        out.append(InvariantResult(
            "registry_monotonic", str(self.token_id),
            len(set(ids)) == len(ids) and grew,
            f"ids {ids}",
        ))
        self._registry_prev = set(ids)

        for side in sc.side_chains:
            if side.variant != VARIANT_GASLESS:
                continue
            side_chain = self.hosts[side.chain_id].chain
            bank: ReserveBank = side_chain.contracts[side.genesis.bank_contract]
            out.append(InvariantResult(
                "bank_access_control", str(side.chain_id),
                True,
                f"{len(bank.access_violations)} rejected foreign calls",
            ))

        out.extend(self._check_relay_canon())
        out.extend(self._check_window_contiguity())
        out.append(self._check_zero_gasprice())
        return out

    def _relay_worthy(self, chain_id: Address, witness: WitnessNode) -> set[tuple]:
        """Origins of every event this witness should ever have relayed."""
        chain = self.hosts[chain_id].chain
        cfg = witness.config
        cursor = witness.cursors[chain_id]
        scanned_end = cursor.next_start - 1
        wanted: set[tuple] = set()
        for height in range(0, min(scanned_end, chain.height) + 1):
            for ev in chain.events_at(height):
                origin = ev.origin_plain(chain_id)
                if chain_id == self.token_id:
                    if ev.contract != cfg.bridge_head and ev.contract != cfg.registry:
                        continue
                    if ev.topic == EventTopic.CROSS_CHAIN_ARRIVED and \
                            ev.payload.get("kind") == "transfer":
                        wanted.add(origin)
                    elif ev.topic == EventTopic.EXIST_OR_NOT and ev.payload.get("success") \
                            and ev.payload.get("chain_id") == str(cfg.side_chain_id):
                        wanted.add(origin)
                else:
                    if ev.contract not in cfg.side_watched():
                        continue
                    if ev.topic == EventTopic.ASSETS_LOCKED:
                        wanted.add(origin)
                    elif ev.topic == EventTopic.CROSS_CHAIN_ARRIVED and \
                            ev.contract == cfg.gateway:
                        wanted.add(origin)
        return wanted

    def _check_relay_canon(self) -> list[InvariantResult]:
        out = []
        changed = {c.witness for c in self.scenario.fault_plan.behavior_schedule}
        for witness in self.witnesses:
            cfg = witness.config
            if cfg.behavior != Behavior.HONEST or cfg.name in changed:
                continue
            wanted = self._relay_worthy(self.token_id, witness) | \
                self._relay_worthy(cfg.side_chain_id, witness)
            got = set(witness.relayed_origins)
            out.append(InvariantResult(
                "relay_matches_canon", cfg.name,
                got == wanted,
                "" if got == wanted else
                f"relayed-not-canon {sorted(got - wanted)}, missed {sorted(wanted - got)}",
            ))
        return out

    def _check_window_contiguity(self) -> list[InvariantResult]:
        out = []
        for witness in self.witnesses:
            ok = True
            for cursor in witness.cursors.values():
                prev_end = None
                for start, end in cursor.history:
                    if end < start - 1:
                        ok = False
                    if prev_end is not None and start != prev_end + 1:
                        ok = False
                    prev_end = end
            out.append(InvariantResult(
                "window_contiguity", witness.config.name, ok, "",
            ))
        return out

    def _check_zero_gasprice(self) -> InvariantResult:
        bad = 0
        for host in self.hosts.values():
            chain = host.chain
            allowed = chain.witness_exempt | set(chain.contracts)
            for blk in chain.blocks:
                for tx in blk.transactions:
                    if tx.gasprice == 0 and tx.sender not in allowed:
                        bad += 1
        return InvariantResult("zero_gasprice_rule", "", bad == 0, f"{bad} violations")

    def _record_invariants(self, results: list[InvariantResult], final: bool) -> None:
        for res in results:
            if not res.passed:
                self.invariant_failures.append(res)
        self.trace.record(self.tick, "invariant", "", {
            "final": final,
            "results": [r.to_record() for r in results],
        })

    # ---------------------------------------------------------------- summary

    def _summary(self) -> dict:
        sc = self.scenario
        sides = {}
        for side in sc.side_chains:
            head = self.bridge_heads[side.chain_id]
            chain = self.hosts[side.chain_id].chain
            entry = {
                "variant": side.variant,
                "locked": head.locked,
                "fee_reserve": head.fee_reserve,
                "registered": head.registered,
                "height": chain.height,
            }
            if side.variant == VARIANT_GASLESS:
                vault: RegistrationVault = chain.contracts[side.genesis.register_contract]
                bank: ReserveBank = chain.contracts[side.genesis.bank_contract]
                entry.update({
                    "circulating": sum(chain.accounts.values()),
                    "vault_balance": vault.balance,
                    "vault_suicided": vault.suicided,
                    "bank_balance": bank.balance,
                })
            else:
                trading: TradingBook = chain.contracts[side.genesis.trading_contract]
                gateway: ConsensusGateway = chain.contracts[side.genesis.register_contract]
                entry.update({
                    "trading_sum": trading.ledger_sum(),
                    "escrow": gateway.escrow_total,
                })
            sides[str(side.chain_id)] = entry
        return {
            "quiescent": self.quiescent,
            "ended_at": self.ended_at,
            "registry": [str(c) for c in self.registry.chain_ids],
            "side_chains": sides,
            "token_height": self.hosts[self.token_id].chain.height,
            "invariant_failures": [r.to_record() for r in self.invariant_failures],
            "settled_checks": self.settled_checks,
            "resends": self.resend_records,
        }


def _contract_busy(contract: Any) -> bool:
    if isinstance(contract, BridgeHead):
        return (
            contract.pending is not None
            or bool(contract.reg_stream.tallies)
            or bool(contract.out_stream.tallies)
            or contract.reg_stream.deadline is not None
            or contract.out_stream.deadline is not None
        )
    if isinstance(contract, RegistrationVault):
        return bool(contract.stream.tallies) or contract.stream.deadline is not None
    if isinstance(contract, InterRelay):
        return bool(contract.stream.tallies) or contract.stream.deadline is not None
    if isinstance(contract, ConsensusGateway):
        return contract.escrow_total > 0 or any(
            bool(s.tallies) or s.deadline is not None for s in contract.streams.values()
        )
    return False


def _setup_tx(owner: Address, contract: Address, action: str,
              args: tuple, chain_id: Address) -> tuple[Address, Transaction]:
    return (
        chain_id,
        Transaction(
            sender=owner,
            to=contract,
            value=0,
            gasprice=0,
            payload=MultisigAction(action=action, args=args),
        ),
    )


class RunResult:
    """Outcome of one run: the trace, the report data, and the final world."""

    def __init__(self, sim: Simulation) -> None:
        self.sim = sim
        self.trace_lines = sim.trace.lines
        self.summary = sim._summary()
        self.failures = list(sim.invariant_failures)
        self.quiescent = sim.quiescent

    @property
    def ok(self) -> bool:
        return not self.failures

    def write_trace(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.trace_lines))
            fh.write("\n")


def run_scenario(scenario: Scenario, threshold_override: int | None = None) -> RunResult:
    return Simulation(scenario, threshold_override=threshold_override).run()
