"""Installation-artifact generation: one DHCP host stanza and one
kickstart-style installation script per node profile, both deterministic."""

from __future__ import annotations

from dataclasses import dataclass

from .. import pan


class AiiError(Exception):
    def __init__(self, path: str):
        super().__init__(f"profile is missing required field {path}")
        self.path = path


@dataclass(frozen=True)
class AiiArtifacts:
    dhcp_entry: str
    kickstart: str


def _leaf(tree: pan.Interior, path: str):
    node = pan.lookup(tree, pan.parse_path(path))
    if node is None or isinstance(node, pan.Interior):
        raise AiiError(path)
    return node.value


def _subtree(tree: pan.Interior, path: str) -> pan.Interior:
    node = pan.lookup(tree, pan.parse_path(path))
    if not isinstance(node, pan.Interior):
        raise AiiError(path)
    return node


def aii_generate(tree: pan.Interior) -> AiiArtifacts:
    mac = _leaf(tree, "/hardware/mac")
    ip = _leaf(tree, "/network/ip")
    hostname = _leaf(tree, "/network/hostname")
    partitions = _subtree(tree, "/aii/partitions")
    packages = _subtree(tree, "/aii/packages")

    dhcp = f"host {hostname} {{ hardware ethernet {mac}; fixed-address {ip}; }}"

    lines = [f"# installation script for {hostname}",
             f"network --hostname={hostname} --ip={ip} --device={mac}"]
    for key in sorted(partitions.children):
        entry = partitions.children[key]
        if not isinstance(entry, pan.Interior):
            raise AiiError(f"/aii/partitions/{key}")
        try:
            device = entry.children["device"].value
            mount = entry.children["mount"].value
            size = entry.children["size_mb"].value
        except (KeyError, AttributeError):
            raise AiiError(f"/aii/partitions/{key}") from None
        lines.append(f"part {mount} --size={size} --ondisk={device}")
    lines.append("%packages")
    for key in sorted(packages.children):
        leaf = packages.children[key]
        if not isinstance(leaf, pan.Leaf):
            raise AiiError(f"/aii/packages/{key}")
        lines.append(str(leaf.value))
    lines.append("%end")
    lines.append("%post")
    lines.append(f"fabric-bootstrap --install spma,ncm --node {hostname}")
    lines.append("%end")
    kickstart = "".join(line + "\n" for line in lines)
    return AiiArtifacts(dhcp, kickstart)
