"""Robust molecular string grammar: tokenizer, total decoder, encoder.

The grammar is a pinned house variant of the SELFIES idea ("vocab v1",
shipped as resources/vocab_v1.txt). Decoding is total: every token stream,
including uniformly random garbage, derives a graph whose atoms all sit at
or below their maximum charge-adjusted valence. The mechanisms are the
usual ones: per-atom valence budgets, downward bond-order clamping, and
skip-don't-fail handling of impossible branch and ring targets.

Derivation rules, pinned:
  - Atom tokens bond to the current attachment atom with the order named
    by their prefix ('' single, '=' double, '#' triple, ':' aromatic 1.5),
    stepping the order down (3 -> 2 -> 1, 1.5 -> 1) until both endpoints
    can afford it; if even a single bond does not fit, the token is a
    no-op. The first derived atom has no parent. A successfully derived
    atom becomes the new attachment atom of its scope.
  - [BranchY] reads Y number tokens giving N; the next N+1 tokens (capped
    at the enclosing scope) derive a branch rooted at the current
    attachment atom, which is restored afterwards. With no atoms derived
    yet the branch header is skipped and its body flows inline.
  - [RingY] (order prefixes as above) reads Y number tokens giving Q and
    bonds the attachment atom to the previously derived atom at position
    D-2 - (Q mod (D-1)) in derivation order, where D is the number of
    atoms derived so far; Q = 0 is the immediate predecessor. Self loops,
    duplicate edges, and unaffordable orders make it a no-op.
  - A number token is any token read as its vocabulary id modulo the
    number of non-special tokens; [pad]/[bos] in number position are
    skipped over.
  - [pad] and [bos] are skipped; [eos] ends derivation everywhere.
  - After derivation, each atom is topped up with explicit hydrogens: the
    smallest allowed charge-adjusted valence reachable from the used
    valence by a whole number of single bonds wins; with none reachable
    (an aromatic half left over), floor(max - used) hydrogens are added.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

from .chem.elements import adjusted_valences, max_adjusted_valence
from .chem.graph import Atom, Bond, BondOrder, MolecularGraph2D
from .chem.hashing import wl_colors


class TokenError(ValueError):
    """Malformed text or a symbol outside the vocabulary."""


class EncodeError(ValueError):
    """The graph has no token-stream representation under this grammar."""


class TokenKind(enum.Enum):
    ATOM = "atom"
    BRANCH = "branch"
    RING = "ring"
    PAD = "pad"
    BOS = "bos"
    EOS = "eos"


# Bond-order prefixes on atom and ring tokens.
_ORDER_OF_PREFIX = {"": 1.0, "=": 2.0, "#": 3.0, ":": 1.5}
_PREFIX_OF_ORDER = {v: k for k, v in _ORDER_OF_PREFIX.items()}
_CHARGE_SUFFIXES = (("", 0), ("+1", +1), ("-1", -1))
# Carbon first so that [C] is number token 0, mirroring its use as the
# smallest branch/ring index; hydrogen last among the elements.
_VOCAB_ELEMENTS = ("C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "H")

VOCAB_FILENAME = "vocab_v1.txt"


@dataclass(frozen=True)
class SelfiesToken:
    raw: str
    kind: TokenKind
    element: str | None = None
    charge: int = 0
    order: float = 1.0  # bond to parent (atoms) or ring-bond order (rings)
    size_class: int = 0  # number-token count for branch/ring headers


def _parse_token(raw: str) -> SelfiesToken:
    if len(raw) < 3 or raw[0] != "[" or raw[-1] != "]":
        raise TokenError(f"malformed token: {raw!r}")
    body = raw[1:-1]
    if body in ("pad", "bos", "eos"):
        return SelfiesToken(raw, TokenKind[body.upper()])
    if body in ("Branch1", "Branch2"):
        return SelfiesToken(raw, TokenKind.BRANCH, size_class=int(body[-1]))
    prefix = ""
    if body and body[0] in "=#:":
        prefix, body = body[0], body[1:]
    order = _ORDER_OF_PREFIX[prefix]
    if body in ("Ring1", "Ring2"):
        return SelfiesToken(raw, TokenKind.RING, order=order, size_class=int(body[-1]))
    charge = 0
    for suffix, value in _CHARGE_SUFFIXES:
        if suffix and body.endswith(suffix):
            charge, body = value, body[: -len(suffix)]
            break
    if body not in _VOCAB_ELEMENTS:
        raise TokenError(f"unknown token symbol: {raw!r}")
    return SelfiesToken(raw, TokenKind.ATOM, element=body, charge=charge, order=order)


def _default_token_texts() -> list[str]:
    texts = []
    for sym in _VOCAB_ELEMENTS:
        for prefix in ("", "=", "#", ":"):
            for suffix, _ in _CHARGE_SUFFIXES:
                texts.append(f"[{prefix}{sym}{suffix}]")
    texts += ["[Branch1]", "[Branch2]"]
    for name in ("Ring1", "Ring2"):
        for prefix in ("", "=", "#", ":"):
            texts.append(f"[{prefix}{name}]")
    texts += ["[pad]", "[bos]", "[eos]"]
    return texts


class Vocabulary:
    """Fixed token inventory; vocab id = line number in the published file."""

    def __init__(self, token_texts: list[str]):
        self.tokens: list[SelfiesToken] = [_parse_token(t) for t in token_texts]
        self._id_of: dict[str, int] = {t.raw: i for i, t in enumerate(self.tokens)}
        if len(self._id_of) != len(self.tokens):
            raise TokenError("duplicate token in vocabulary")
        specials = [
            i for i, t in enumerate(self.tokens)
            if t.kind in (TokenKind.PAD, TokenKind.BOS, TokenKind.EOS)
        ]
        if specials != list(range(len(self.tokens) - 3, len(self.tokens))):
            raise TokenError("special tokens must be the final three vocabulary rows")
        # Ids below this act as number tokens with value = id.
        self.number_base = len(self.tokens) - 3
        self.pad_id = self._id_of["[pad]"]
        self.bos_id = self._id_of["[bos]"]
        self.eos_id = self._id_of["[eos]"]

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, raw: str) -> int:
        try:
            return self._id_of[raw]
        except KeyError:
            raise TokenError(f"token not in vocabulary: {raw!r}") from None

    def atom_id(self, element: str, charge: int, order: float) -> int:
        raw = f"[{_PREFIX_OF_ORDER[order]}{element}{_charge_suffix(charge)}]"
        return self.id_of(raw)

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(_default_token_texts())

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln.strip() for ln in lines if ln.strip()])

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            "\n".join(t.raw for t in self.tokens) + "\n", encoding="utf-8"
        )


def _charge_suffix(charge: int) -> str:
    for suffix, value in _CHARGE_SUFFIXES:
        if value == charge:
            return suffix
    raise EncodeError(f"charge {charge} has no token form")


_DEFAULT_VOCAB: Vocabulary | None = None


def default_vocabulary() -> Vocabulary:
    global _DEFAULT_VOCAB
    if _DEFAULT_VOCAB is None:
        _DEFAULT_VOCAB = Vocabulary.default()
    return _DEFAULT_VOCAB


@dataclass
class SelfiesTokenStream:
    tokens: list[SelfiesToken]
    vocab_ids: list[int]

    @property
    def raw(self) -> str:
        return "".join(t.raw for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_ids(cls, ids: list[int], vocab: Vocabulary | None = None) -> "SelfiesTokenStream":
        vocab = vocab or default_vocabulary()
        return cls([vocab.tokens[i] for i in ids], list(ids))


def tokenize(text: str, vocab: Vocabulary | None = None) -> SelfiesTokenStream:
    """Split bracketed text into tokens; reject anything outside the grammar."""
    vocab = vocab or default_vocabulary()
    tokens: list[SelfiesToken] = []
    ids: list[int] = []
    pos = 0
    while pos < len(text):
        if text[pos] != "[":
            raise TokenError(f"expected '[' at position {pos}")
        close = text.find("]", pos)
        if close < 0:
            raise TokenError(f"unbalanced bracket at position {pos}")
        raw = text[pos : close + 1]
        ids.append(vocab.id_of(raw))
        tokens.append(vocab.tokens[ids[-1]])
        pos = close + 1
    return SelfiesTokenStream(tokens, ids)


class _Stop(Exception):
    """Raised on [eos]: unwinds every open scope."""


@dataclass
class _State:
    vocab: Vocabulary
    tokens: list[SelfiesToken]
    atoms: list[Atom] = field(default_factory=list)
    bonds: dict[tuple[int, int], float] = field(default_factory=dict)
    budgets: list[float] = field(default_factory=list)


def _clamp_order(requested: float, *budgets: float) -> float | None:
    ladder = {3.0: (3.0, 2.0, 1.0), 2.0: (2.0, 1.0), 1.5: (1.5, 1.0), 1.0: (1.0,)}
    for order in ladder[requested]:
        if all(b >= order for b in budgets):
            return order
    return None


def _read_number(st: _State, pos: int, end: int, count: int) -> tuple[int | None, int]:
    """Read `count` number tokens; None if the scope runs out first."""
    value = 0
    got = 0
    while pos < end and got < count:
        tok = st.tokens[pos]
        pos += 1
        if tok.kind in (TokenKind.PAD, TokenKind.BOS):
            continue
        if tok.kind is TokenKind.EOS:
            raise _Stop
        value = value * st.vocab.number_base + (
            st.vocab.id_of(tok.raw) % st.vocab.number_base
        )
        got += 1
    return (value if got == count else None), pos


def _derive(st: _State, pos: int, end: int, attach: int | None) -> int:
    while pos < end:
        tok = st.tokens[pos]
        pos += 1
        if tok.kind in (TokenKind.PAD, TokenKind.BOS):
            continue
        if tok.kind is TokenKind.EOS:
            raise _Stop
        if tok.kind is TokenKind.ATOM:
            cap = max_adjusted_valence(tok.element, tok.charge)
            if attach is None:
                st.atoms.append(Atom(tok.element, tok.charge))
                st.budgets.append(float(cap))
                attach = len(st.atoms) - 1
                continue
            order = _clamp_order(tok.order, st.budgets[attach], float(cap))
            if order is None:
                continue
            st.atoms.append(Atom(tok.element, tok.charge))
            st.budgets.append(float(cap))
            new = len(st.atoms) - 1
            st.bonds[(attach, new)] = order
            st.budgets[attach] -= order
            st.budgets[new] -= order
            attach = new
        elif tok.kind is TokenKind.BRANCH:
            number, pos = _read_number(st, pos, end, tok.size_class)
            if number is None or attach is None:
                continue
            body_end = min(pos + number + 1, end)
            pos = _derive(st, pos, body_end, attach)
        elif tok.kind is TokenKind.RING:
            number, pos = _read_number(st, pos, end, tok.size_class)
            derived = len(st.atoms)
            if number is None or attach is None or derived < 2:
                continue
            partner = derived - 2 - (number % (derived - 1))
            if partner == attach:
                continue
            key = (partner, attach) if partner < attach else (attach, partner)
            if key in st.bonds:
                continue
            order = _clamp_order(tok.order, st.budgets[attach], st.budgets[partner])
            if order is None:
                continue
            st.bonds[key] = order
            st.budgets[attach] -= order
            st.budgets[partner] -= order
    return pos


def _hydrogen_fill(used: float, symbol: str, charge: int) -> int:
    """Hydrogens to add so the atom lands on an allowed valence if it can."""
    for v in sorted(adjusted_valences(symbol, charge)):
        gap = v - used
        if gap >= 0 and float(gap).is_integer():
            return int(gap)
    return max(int(max_adjusted_valence(symbol, charge) - used), 0)


def decode(
    stream: SelfiesTokenStream | list[int] | str,
    vocab: Vocabulary | None = None,
) -> MolecularGraph2D:
    """Total derivation: any stream in, valence-respecting graph out."""
    vocab = vocab or default_vocabulary()
    if isinstance(stream, str):
        stream = tokenize(stream, vocab)
    elif isinstance(stream, list):
        stream = SelfiesTokenStream.from_ids(stream, vocab)
    st = _State(vocab=vocab, tokens=stream.tokens)
    try:
        _derive(st, 0, len(st.tokens), None)
    except _Stop:
        pass
    atoms = list(st.atoms)
    bonds = [
        Bond(i, j, BondOrder.from_value(order)) for (i, j), order in st.bonds.items()
    ]
    for idx in range(len(st.atoms)):
        a = st.atoms[idx]
        used = max_adjusted_valence(a.symbol, a.charge) - st.budgets[idx]
        for _ in range(_hydrogen_fill(used, a.symbol, a.charge)):
            atoms.append(Atom("H", 0))
            bonds.append(Bond(idx, len(atoms) - 1, BondOrder.SINGLE))
    return MolecularGraph2D(atoms, bonds)


def _droppable_hydrogens(graph: MolecularGraph2D) -> tuple[list[list[int]], set[int]]:
    """Per-owner lists of hydrogens the encoder may leave to valence fill."""
    adj = graph.neighbors()
    owners: list[list[int]] = [[] for _ in graph.atoms]
    for h, a in enumerate(graph.atoms):
        if a.symbol != "H" or a.charge != 0 or len(adj[h]) != 1:
            continue
        owner, order = adj[h][0]
        if order != 1.0 or graph.atoms[owner].symbol == "H":
            continue
        owners[owner].append(h)
    dropped: set[int] = set()
    for i, atom in enumerate(graph.atoms):
        pool = [h for h in owners[i] if h not in dropped]
        if i in dropped:
            continue
        used_total = sum(order for _, order in adj[i])
        s = len(pool)
        base = used_total - s
        for k in range(s, -1, -1):
            if _hydrogen_fill(base + (s - k), atom.symbol, atom.charge) == k:
                dropped.update(pool[:k])
                break
        else:
            raise EncodeError(
                f"atom {i} ({atom.symbol}) sits between allowed valences; "
                "no hydrogen split reproduces it"
            )
    return owners, dropped


def _number_token_ids(vocab: Vocabulary, value: int) -> tuple[int, list[int]]:
    """(size_class, number-token ids) for a branch length or ring offset."""
    base = vocab.number_base
    if value < base:
        return 1, [value]
    if value < base * base:
        return 2, [value // base, value % base]
    raise EncodeError(f"number {value} exceeds two number tokens (base {base})")


def encode(
    graph: MolecularGraph2D, vocab: Vocabulary | None = None
) -> SelfiesTokenStream:
    """Token stream whose decode is graph-isomorphic to the input.

    Depth-first traversal rooted at the kept atom with the smallest
    canonical color (ties by input index); at each atom, all children but
    the last are wrapped in branches, back edges become ring tokens right
    after the atom that closes them.
    """
    vocab = vocab or default_vocabulary()
    from .chem.graph import is_valid_and_connected

    if graph.n_atoms == 0:
        raise EncodeError("empty graph")
    if not is_valid_and_connected(graph):
        raise EncodeError("graph must be valence-admissible and connected")
    _, dropped = _droppable_hydrogens(graph)
    kept = [i for i in range(graph.n_atoms) if i not in dropped]
    if not kept:
        raise EncodeError("no atoms left after hydrogen dropping")
    colors = wl_colors(graph)
    rank = {i: (colors[i], i) for i in kept}
    root = min(kept, key=lambda i: rank[i])
    adj = graph.neighbors()
    neighbor_order = {
        i: sorted(
            ((j, order) for j, order in adj[i] if j not in dropped),
            key=lambda pair: rank[pair[0]],
        )
        for i in kept
    }

    position: dict[int, int] = {}
    emitted: set[tuple[int, int]] = set()
    ids: list[int] = []

    def emit_subtree(node: int, parent: int, order: float, out: list[int]) -> None:
        atom = graph.atoms[node]
        out.append(vocab.atom_id(atom.symbol, atom.charge, order))
        position[node] = len(position)
        if parent >= 0:
            emitted.add((node, parent) if node < parent else (parent, node))
        for partner, ring_order in neighbor_order[node]:
            key = (node, partner) if node < partner else (partner, node)
            if partner == parent or partner not in position or key in emitted:
                continue
            emitted.add(key)
            offset = position[node] - 1 - position[partner]
            size_class, digit_ids = _number_token_ids(vocab, offset)
            prefix = _PREFIX_OF_ORDER[ring_order]
            out.append(vocab.id_of(f"[{prefix}Ring{size_class}]"))
            out.extend(digit_ids)
        while True:
            remaining = [
                (child, child_order)
                for child, child_order in neighbor_order[node]
                if child not in position
            ]
            if not remaining:
                break
            child, child_order = remaining[0]
            body: list[int] = []
            emit_subtree(child, node, child_order, body)
            # A subtree may swallow later siblings through a cycle, so only
            # decide on branch wrapping after it is built.
            if any(c not in position for c, _ in neighbor_order[node]):
                size_class, digit_ids = _number_token_ids(vocab, len(body) - 1)
                out.append(vocab.id_of(f"[Branch{size_class}]"))
                out.extend(digit_ids)
                out.extend(body)
            else:
                out.extend(body)

    emit_subtree(root, -1, 1.0, ids)
    return SelfiesTokenStream.from_ids(ids, vocab)
