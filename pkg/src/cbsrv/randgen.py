"""Seeded generation of small random systems for the property-test corpus.

The generator biases towards live systems (most guards true, every location
has an outgoing transition, the initial state enables something) so random
schedules actually exercise the concurrency machinery.
"""

from __future__ import annotations

import random

from .expr import Assignment, Binary, Lit, Var
from .model import AtomicComponent, CompositeSystem, Interaction, Port, Transition, validate


def _random_guard(rng: random.Random, var_names: list[str]):
    if not var_names or rng.random() < 0.6:
        return Lit(True)
    v = rng.choice(var_names)
    op = rng.choice(["<=", "<", ">=", ">"])
    return Binary(op, Var(v), Lit(rng.randint(0, 9)))


def _random_step(rng: random.Random, var_names: list[str]):
    steps = []
    for v in var_names:
        r = rng.random()
        if r < 0.35:
            steps.append(Assignment(v, Binary("+", Var(v), Lit(rng.randint(1, 2)))))
        elif r < 0.45:
            steps.append(Assignment(v, Lit(rng.randint(0, 3))))
        elif r < 0.5 and len(var_names) > 1:
            other = rng.choice([w for w in var_names if w != v])
            steps.append(Assignment(v, Var(other)))
    return tuple(steps)


def _random_component(rng: random.Random, cid: str) -> AtomicComponent:
    n_locs = rng.randint(2, 3)
    locations = tuple(f"l{k}" for k in range(n_locs))
    n_vars = rng.randint(0, 2)
    variables = tuple((f"v{k}", rng.randint(0, 3)) for k in range(n_vars))
    var_names = [name for name, _ in variables]
    n_ports = rng.randint(1, 3)
    ports = []
    for k in range(n_ports):
        attached = ()
        if var_names and rng.random() < 0.5:
            attached = (rng.choice(var_names),)
        ports.append(Port(f"p{k}", attached))
    transitions = []
    for loc in locations:
        for _ in range(rng.randint(1, 2)):
            transitions.append(Transition(
                source=loc,
                port=f"p{rng.randrange(n_ports)}",
                guard=_random_guard(rng, var_names),
                step=_random_step(rng, var_names),
                target=rng.choice(locations),
            ))
    return AtomicComponent(
        id=cid,
        ports=tuple(ports),
        locations=locations,
        initial_location=locations[0],
        variables=variables,
        transitions=tuple(transitions),
    )


def _random_interaction(rng: random.Random, comps: list[AtomicComponent],
                        aid: str) -> Interaction:
    size = rng.randint(1, min(3, len(comps)))
    chosen = rng.sample(comps, size)
    ports = tuple((c.id, rng.choice(c.ports).id) for c in chosen)
    transfer = ()
    attached = [
        (cid, v) for cid, pid in ports
        for v in next(c for c in comps if c.id == cid).port_map()[pid].attached
    ]
    if len(attached) >= 2 and rng.random() < 0.4:
        (tc, tv), (sc, sv) = rng.sample(attached, 2)
        transfer = (Assignment(f"{tc}.{tv}", Var(f"{sc}.{sv}")),)
    return Interaction(aid, ports, transfer)


def random_system(seed: int, max_components: int = 4,
                  max_interactions: int = 6) -> CompositeSystem:
    """A small valid composite system, deterministic in the seed."""
    rng = random.Random(seed)
    for attempt in range(50):
        n = rng.randint(2, max_components)
        comps = [_random_component(rng, f"C{k+1}") for k in range(n)]
        m = rng.randint(2, max_interactions)
        inters = [_random_interaction(rng, comps, f"a{k+1}") for k in range(m)]
        ids = {a.id: a for a in inters}
        sys = CompositeSystem(tuple(comps), tuple(ids.values()),
                              name=f"rand{seed}")
        if validate(sys):
            continue
        from .semantics import enabled_interactions

        if enabled_interactions(sys, sys.initial_state()):
            return sys
    return sys  # rarely: a valid but initially deadlocked system
