"""Darknet-style INI model configuration.

Grammar: ``[section]`` headers on their own line, ``key=value`` pairs,
``#`` or ``;`` starts a comment. The first section must be ``[net]``.

Recognised keys per section (defaults in parentheses):

========== ===============================================================
net        channels, height, width (all required)
convolutional
           filters, size (required); stride (1), pad (0), groups (1),
           batch_normalize (0), activation (linear)
maxpool    size (required); stride (1), pad (0)
avgpool    none
connected  output (required); activation (linear)
softmax    none
shortcut   from (required, negative values are relative); activation (linear)
========== ===============================================================
"""

from __future__ import annotations

from ..errors import ParseError
from ..netspec import ACTIVATIONS, LayerSpec, NetworkSpec

# cfg key -> LayerSpec attribute, in serialization order
SECTION_KEYS = {
    "convolutional": {"filters": "filters", "size": "size", "stride": "stride", "pad": "pad",
                      "groups": "groups", "batch_normalize": "batch_normalize", "activation": "activation"},
    "maxpool": {"size": "size", "stride": "stride", "pad": "pad"},
    "avgpool": {},
    "connected": {"output": "outputs", "activation": "activation"},
    "softmax": {},
    "shortcut": {"from": "from_", "activation": "activation"},
}
REQUIRED = {
    "convolutional": ("filters", "size"),
    "maxpool": ("size",),
    "connected": ("output",),
    "shortcut": ("from",),
}
NET_KEYS = ("channels", "height", "width")


def _sections(text: str):
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {line!r}", lineno)
            current = (line[1:-1].strip(), lineno, [])
            yield current
        else:
            if current is None:
                raise ParseError("key outside any section", lineno)
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", lineno)
            key, value = (part.strip() for part in line.split("=", 1))
            current[2].append((key, value, lineno))


def _int(key: str, value: str, lineno: int) -> int:
    try:
        return int(value, 0)
    except ValueError:
        raise ParseError(f"{key}: malformed number {value!r}", lineno) from None


def parse_cfg(text: str) -> NetworkSpec:
    sections = list(_sections(text))
    if not sections or sections[0][0] != "net":
        raise ParseError("configuration must start with a [net] section", sections[0][1] if sections else None)
    name, lineno, pairs = sections[0]
    net = {}
    for key, value, ln in pairs:
        if key not in NET_KEYS:
            raise ParseError(f"[net]: unknown key {key!r}", ln)
        net[key] = _int(key, value, ln)
    for key in NET_KEYS:
        if key not in net:
            raise ParseError(f"[net]: missing key {key!r}", lineno)
    spec = NetworkSpec(net["channels"], net["height"], net["width"])

    for name, lineno, pairs in sections[1:]:
        if name not in SECTION_KEYS:
            raise ParseError(f"unknown section [{name}]", lineno)
        keys = SECTION_KEYS[name]
        layer = LayerSpec(name)
        seen = set()
        for key, value, ln in pairs:
            if key not in keys:
                raise ParseError(f"[{name}]: unknown key {key!r}", ln)
            if key in seen:
                raise ParseError(f"[{name}]: duplicate key {key!r}", ln)
            seen.add(key)
            if key == "activation":
                if value not in ACTIVATIONS:
                    raise ParseError(f"[{name}]: unknown activation {value!r}", ln)
                layer.activation = value
            else:
                setattr(layer, keys[key], _int(key, value, ln))
        for key in REQUIRED.get(name, ()):
            if key not in seen:
                raise ParseError(f"[{name}]: missing required key {key!r}", lineno)
        spec.layers.append(layer)
    return spec


def serialize_cfg(spec: NetworkSpec) -> str:
    """Canonical text: every key written, in table order, one blank line between sections."""
    blocks = [f"[net]\nchannels={spec.channels}\nheight={spec.height}\nwidth={spec.width}\n"]
    for layer in spec.layers:
        lines = [f"[{layer.kind}]"]
        for key, attr in SECTION_KEYS[layer.kind].items():
            lines.append(f"{key}={getattr(layer, attr)}")
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def load_cfg(path) -> NetworkSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_cfg(fh.read())
