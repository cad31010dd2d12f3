from textwrap import dedent
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence


class UnknownElement(KeyError):
    """Element {element!r} is not listed in the van der Waals radii table.
    Known elements: {known}.
    """

    def __init__(self, element: str, known: Iterable[str] = ()):
        msg = dedent(self.__class__.__doc__ or "").strip()
        super().__init__(msg.format(element=element, known=", ".join(known)))

    def __str__(self):
        return str(self.args[0])

    @classmethod
    def check(cls, element: str, table: Mapping[str, float]):
        if element not in table:
            raise cls(element, sorted(table))


class OutOfBounds(ValueError):
    """Atom {atom} ({element}) at {position} with reach {reach:.2f} Å does not
    fit inside the grid [{low}, {high}].
    """

    def __init__(self, atom: int, element: str, position, reach: float, low, high):
        fmt = lambda v: "(" + ", ".join(f"{x:.3f}" for x in v) + ")"  # noqa: E731
        msg = " ".join(dedent(self.__class__.__doc__ or "").split())
        sub = dict(atom=atom, element=element, position=fmt(position), reach=reach)
        super().__init__(msg.format(low=fmt(low), high=fmt(high), **sub))


class SpecMismatch(ValueError):
    """Voxel grids are defined over different grid specifications ({a} != {b})"""

    def __init__(self, a, b):
        super().__init__(self.__doc__.format(a=a, b=b))

    @classmethod
    def check(cls, a, b):
        if a != b:
            raise cls(a, b)


class InvalidRotation(ValueError):
    """Quaternion {quat} is not a unit rotation (norm {norm:.9f})"""

    def __init__(self, quat, norm: float):
        super().__init__(self.__doc__.format(quat=tuple(quat), norm=norm))


class PatchingError(ValueError):
    """Grid extent {extent} is not divisible by the patch edge {edge}"""

    def __init__(self, extent: int, edge: int):
        super().__init__(self.__doc__.format(extent=extent, edge=edge))

    @classmethod
    def check(cls, extent: int, edge: int):
        if edge <= 0 or extent % edge:
            raise cls(extent, edge)


class InvalidFileFormat(ValueError):
    """Invalid {format} content: {reason}"""

    def __init__(self, format: str, reason: str):
        super().__init__(self.__doc__.format(format=format, reason=reason))


class ParseError(ValueError):
    """Line {lineno}: {reason}"""

    def __init__(self, lineno: int, reason: str, line: str = ""):
        self.lineno = lineno
        msg = self.__doc__.format(lineno=lineno, reason=reason)
        super().__init__(f"{msg} ({line.rstrip()!r})" if line.strip() else msg)


class UnsupportedFeature(ValueError):
    """Line {lineno}: {feature} is not supported by the MOL V2000 subset"""

    def __init__(self, lineno: int, feature: str):
        self.lineno = lineno
        super().__init__(self.__doc__.format(lineno=lineno, feature=feature))


class InvalidMolecule(ValueError):
    """Molecule {name!r} is inconsistent: {reason}"""

    def __init__(self, name: str, reason: str):
        super().__init__(self.__doc__.format(name=name, reason=reason))


class MultiComponent(ValueError):
    """Molecule {name!r} has {count} disconnected components.
    Fragmentation requires a single connected molecule.
    """

    def __init__(self, name: str, count: int):
        msg = " ".join(dedent(self.__class__.__doc__ or "").split())
        super().__init__(msg.format(name=name, count=count))


class EmptyCorpus(ValueError):
    """Cannot build a fragment vocabulary from an empty corpus"""

    def __init__(self):
        super().__init__(self.__doc__)

    @classmethod
    def check(cls, corpus: Sequence):
        if not corpus:
            raise cls()


class InternalConsistency(RuntimeError):  # pragma: no cover -- not supposed to happen
    """Cut bonds do not form a tree over the fragments ({reason})"""

    def __init__(self, reason: str):
        super().__init__(self.__doc__.format(reason=reason))


class TranslationOutOfRange(ValueError):
    """Translation component {value:.3f} Å is outside [{low:.1f}, {high:.1f})"""

    def __init__(self, value: float, length: float):
        super().__init__(self.__doc__.format(value=value, low=-length / 2, high=length / 2))


class MalformedSequence(ValueError):
    """Token sequence is malformed at position {position}: {reason}"""

    def __init__(self, position: int, reason: str):
        self.position = position
        super().__init__(self.__doc__.format(position=position, reason=reason))


class EmptyTree(MalformedSequence):
    """Token sequence does not contain any fragment"""

    def __init__(self):
        ValueError.__init__(self, self.__doc__)
        self.position = 1


class UnknownToken(KeyError):
    """{what} {value!r} is not part of the fragment vocabulary (size {size})"""

    def __init__(self, what: str, value: Any, size: int):
        super().__init__(self.__doc__.format(what=what, value=value, size=size))

    def __str__(self):
        return str(self.args[0])


class AssemblyError(ValueError):
    """Cannot bond tree edge {parent} -> {child}: no unused breakpoint on the
    {side} fragment.
    """

    def __init__(self, parent: int, child: int, side: str):
        msg = " ".join(dedent(self.__class__.__doc__ or "").split())
        super().__init__(msg.format(parent=parent, child=child, side=side))


class VocabularyTooSmall(ValueError):
    """The base set only provides {found} distinct fragments ({required} required)"""

    def __init__(self, found: int, required: int):
        super().__init__(self.__doc__.format(found=found, required=required))

    @classmethod
    def check(cls, found: int, required: int):
        if found < required:
            raise cls(found, required)


class ShapeMismatch(ValueError):
    """Input grid of extent {got} does not match the model (extent {expected},
    patch edge {edge}).
    """

    def __init__(self, got, expected: int, edge: int):
        msg = " ".join(dedent(self.__class__.__doc__ or "").split())
        super().__init__(msg.format(got=got, expected=expected, edge=edge))


class PitchMismatch(ShapeMismatch):
    """Input grid pitch {got} Å does not match the model (pitch {expected} Å)"""

    def __init__(self, got: float, expected: float):
        ValueError.__init__(self, self.__doc__.format(got=got, expected=expected))

    @classmethod
    def check(cls, got: float, expected: float):
        if abs(got - expected) > 1e-9:
            raise cls(got, expected)


class OverlengthPrefix(ValueError):
    """Prefix of length {length} reaches the model limit max_len={max_len}"""

    def __init__(self, length: int, max_len: int):
        super().__init__(self.__doc__.format(length=length, max_len=max_len))

    @classmethod
    def check(cls, length: int, max_len: int):
        if length >= max_len:
            raise cls(length, max_len)


class NumericError(FloatingPointError):
    """Non-finite loss ({value}) computed for batch {batch_id}"""

    def __init__(self, value: float, batch_id: int):
        self.batch_id = batch_id
        super().__init__(self.__doc__.format(value=value, batch_id=batch_id))


class Diverged(RuntimeError):
    """Training diverged at step {step}; last parameters saved to {checkpoint}"""

    def __init__(self, step: int, checkpoint: Optional[str]):
        self.step = step
        super().__init__(self.__doc__.format(step=step, checkpoint=checkpoint))


class ScorerProtocolError(RuntimeError):
    """Scorer {command!r} violated the wire protocol: {reason}"""

    def __init__(self, command: Sequence[str], reason: str):
        cmd = " ".join(command)
        super().__init__(self.__doc__.format(command=cmd, reason=reason))


class CheckpointNotFound(FileNotFoundError):
    """Model checkpoint {path!r} does not exist"""

    def __init__(self, path):
        super().__init__(self.__doc__.format(path=str(path)))

    @classmethod
    def check(cls, path):
        from pathlib import Path

        if not Path(path).is_file():
            raise cls(path)


class InvalidCheckpoint(ValueError):
    """{path!r} is not a usable checkpoint: {reason}"""

    def __init__(self, path, reason: str):
        super().__init__(self.__doc__.format(path=str(path), reason=reason))


class EmptyInput(ValueError):
    """{what} requires at least one molecule"""

    def __init__(self, what: str):
        super().__init__(self.__doc__.format(what=what))


class UndefinedRuleTable(ValueError):
    """The given rule table ('{name}') is not registered with ``shapefrag``.
    Are you sure you have the right plugins installed and loaded?
    """

    def __init__(self, name: str, available: Sequence[str]):
        msg = self.__class__.__doc__ or ""
        super().__init__(msg.format(name=name) + f"Available: {', '.join(available)}")

    @classmethod
    def check(cls, name: str, available: Sequence[str]):
        """:meta private:"""
        if name not in available:
            raise cls(name, available)


class AlreadyRegisteredRule(ValueError):
    """The bond rule '{name}' is already registered in table '{table}' by '{existing}'.

    Some installed plugins seem to be in conflict with each other,
    please check '{new}' and '{existing}'.
    """

    def __init__(self, name: str, table: str, new: Callable, existing: Callable):
        existing_id = f"{existing.__module__}.{existing.__qualname__}"
        new_id = f"{new.__module__}.{new.__qualname__}"
        msg = dedent(self.__class__.__doc__ or "")
        sub = dict(name=name, table=table, new=new_id, existing=existing_id)
        super().__init__(msg.format(**sub))

    @classmethod
    def check(cls, name: str, table: str, fn: Callable, registry: Mapping[str, Callable]):
        """:meta private:"""
        if name in registry:
            raise cls(name, table, fn, registry[name])
