"""Trajectory serialization: canonical JSON, packed binary, manifests.

Both codecs round-trip every float bit for bit. JSON is the readable
interchange format; the binary format is a fixed little-endian layout
for bulk datasets (roughly 4x smaller and much faster to load). A
dataset directory is described by a manifest holding per-item sha256
checksums so consumers can verify integrity and reproducibility
without parsing the items themselves.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import ValidationError
from .geom import Pose
from .synth import PHASES, Frame, Trajectory

MAGIC = b"HOPKIT-TRAJ-v01\n"
assert len(MAGIC) == 16

# Self-describing version tag carried in the meta block of both formats.
FORMAT_VERSION = "hopkit-traj/1"

# Provenance keys promoted to named metadata; the rest ride in extras.
_META_KEYS = ("hand_model", "object", "skills", "seed", "scale")

FORMATS = ("json", "binary")


def canonical_json(obj) -> bytes:
    """Serialize with sorted keys and no whitespace, trailing newline.

    Python's float repr is shortest-round-trip, so floats survive a
    dump/parse cycle exactly; two equal documents serialize to equal
    bytes.
    """
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n").encode(
        "utf-8"
    )


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _meta_dict(traj: Trajectory) -> dict:
    prov = dict(traj.provenance)
    meta = {"format": FORMAT_VERSION, "fps": traj.fps}
    for key in _META_KEYS:
        if key in prov:
            meta[key] = prov.pop(key)
    if prov:
        meta["extras"] = prov
    return meta


def _provenance_from_meta(meta: dict) -> tuple[float, dict]:
    meta = dict(meta)
    version = meta.pop("format", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported format version {version!r}")
    fps = float(meta.pop("fps"))
    prov = meta.pop("extras", {})
    if not isinstance(prov, dict):
        raise ValidationError("meta extras must be an object")
    prov = dict(prov)
    for key in _META_KEYS:
        if key in meta:
            prov[key] = meta[key]
    return fps, prov


def trajectory_to_dict(traj: Trajectory) -> dict:
    frames = []
    for f in traj.frames:
        fdoc = {
            "wrist": {"p": f.wrist.position.tolist(), "q": f.wrist.orientation.tolist()},
            "theta": f.theta.tolist(),
            "joints": f.joints.tolist(),
            "contact": [bool(c) for c in f.contact],
            "phase": f.phase,
        }
        if f.has_object:
            fdoc["obj"] = {"p": f.obj_pose.position.tolist(), "q": f.obj_pose.orientation.tolist()}
            fdoc["obj_kp"] = f.obj_keypoints.tolist()
        frames.append(fdoc)
    return {"meta": _meta_dict(traj), "frames": frames}


def _pose_from_doc(doc, where: str) -> Pose:
    if not isinstance(doc, dict) or "p" not in doc or "q" not in doc:
        raise ValidationError(f"{where}: pose needs 'p' and 'q'")
    p = np.asarray(doc["p"], dtype=np.float64)
    q = np.asarray(doc["q"], dtype=np.float64)
    if p.shape != (3,) or q.shape != (4,):
        raise ValidationError(f"{where}: pose must be p (3,) and q (4,)")
    if abs(float(np.linalg.norm(q)) - 1.0) > 1e-6:
        raise ValidationError(f"{where}: quaternion is not unit norm")
    return Pose(p, q)


def trajectory_from_dict(doc: dict) -> Trajectory:
    if not isinstance(doc, dict) or "meta" not in doc or "frames" not in doc:
        raise ValidationError("trajectory document needs 'meta' and 'frames'")
    if "fps" not in doc["meta"]:
        raise ValidationError("meta.fps is required")
    fps, prov = _provenance_from_meta(doc["meta"])
    frames = []
    for i, fdoc in enumerate(doc["frames"]):
        where = f"frames[{i}]"
        if not isinstance(fdoc, dict):
            raise ValidationError(f"{where}: frame must be an object")
        missing = [k for k in ("wrist", "theta", "joints", "contact", "phase") if k not in fdoc]
        if missing:
            raise ValidationError(f"{where}: missing {missing}")
        if fdoc["phase"] not in PHASES:
            raise ValidationError(f"{where}: unknown phase {fdoc['phase']!r}")
        has_obj = "obj" in fdoc
        if has_obj != ("obj_kp" in fdoc):
            raise ValidationError(f"{where}: 'obj' and 'obj_kp' must appear together")
        frames.append(
            Frame(
                wrist=_pose_from_doc(fdoc["wrist"], f"{where}.wrist"),
                theta=np.asarray(fdoc["theta"], dtype=np.float64),
                joints=np.asarray(fdoc["joints"], dtype=np.float64),
                contact=np.asarray(fdoc["contact"], dtype=bool),
                phase=str(fdoc["phase"]),
                obj_pose=_pose_from_doc(fdoc["obj"], f"{where}.obj") if has_obj else None,
                obj_keypoints=np.asarray(fdoc["obj_kp"], dtype=np.float64) if has_obj else None,
            )
        )
    return Trajectory(frames=tuple(frames), fps=fps, provenance=prov)


def trajectory_to_json_bytes(traj: Trajectory) -> bytes:
    return canonical_json(trajectory_to_dict(traj))


def trajectory_from_json_bytes(data: bytes) -> Trajectory:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"not a JSON trajectory: {exc}") from None
    return trajectory_from_dict(doc)


def trajectory_to_binary(traj: Trajectory) -> bytes:
    """Pack into the fixed binary layout.

    Layout (all little-endian):
      16 bytes  magic
      u32       meta length, then that many bytes of canonical JSON
      u32 x5    n_frames, dof, n_joints, n_keypoints, n_fingertips
      u8        has_object flag, then 3 zero pad bytes
      per frame f64 wrist p[3] q[4], theta[dof], joints[n_joints*3],
                (f64 obj p[3] q[4], obj_kp[n_kp*3] when has_object),
                u8 contact[n_fingertips], u8 phase index

    The object channel must be uniform across frames; mixed clips only
    fit the JSON codec.
    """
    f0 = traj.frames[0]
    has_object = f0.has_object
    for i, f in enumerate(traj.frames):
        if f.has_object != has_object:
            raise ValidationError(
                f"frames[{i}]: object channel must be uniform for binary packing"
            )
    dof = f0.theta.shape[0]
    n_joints = f0.joints.shape[0]
    n_kp = f0.obj_keypoints.shape[0] if has_object else 0
    n_ft = f0.contact.shape[0]
    for i, f in enumerate(traj.frames):
        if f.theta.shape[0] != dof or f.joints.shape[0] != n_joints or f.contact.shape[0] != n_ft:
            raise ValidationError(f"frames[{i}]: inconsistent hand dimensions")
        if has_object and f.obj_keypoints.shape[0] != n_kp:
            raise ValidationError(f"frames[{i}]: inconsistent keypoint count")

    meta = canonical_json(_meta_dict(traj))
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", len(meta))
    out += meta
    out += struct.pack("<5I", len(traj.frames), dof, n_joints, n_kp, n_ft)
    out += struct.pack("<B3x", 1 if has_object else 0)
    for f in traj.frames:
        row = np.concatenate(
            [f.wrist.position, f.wrist.orientation, f.theta, f.joints.reshape(-1)]
        )
        if has_object:
            row = np.concatenate(
                [row, f.obj_pose.position, f.obj_pose.orientation, f.obj_keypoints.reshape(-1)]
            )
        out += np.ascontiguousarray(row, dtype="<f8").tobytes()
        out += bytes(int(c) for c in f.contact)
        out += struct.pack("<B", PHASES.index(f.phase))
    return bytes(out)


def trajectory_from_binary(data: bytes) -> Trajectory:
    def need(n: int, what: str) -> int:
        if pos + n > len(data):
            raise ValidationError(f"file truncated in {what} ({pos + n} > {len(data)} bytes)")
        return pos + n

    pos = 0
    end = need(16, "magic")
    if data[pos:end] != MAGIC:
        raise ValidationError("not a trajectory file (bad magic)")
    pos = end
    end = need(4, "meta length")
    (meta_len,) = struct.unpack("<I", data[pos:end])
    pos = end
    end = need(meta_len, "meta")
    try:
        meta = json.loads(data[pos:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"corrupt meta block: {exc}") from None
    if "fps" not in meta:
        raise ValidationError("meta.fps is required")
    fps, prov = _provenance_from_meta(meta)
    pos = end
    end = need(24, "header")
    n_frames, dof, n_joints, n_kp, n_ft = struct.unpack("<5I", data[pos : pos + 20])
    (has_obj_byte,) = struct.unpack("<B3x", data[pos + 20 : end])
    if has_obj_byte not in (0, 1):
        raise ValidationError(f"has_object flag must be 0 or 1, got {has_obj_byte}")
    has_object = bool(has_obj_byte)
    pos = end

    n_floats = 7 + dof + 3 * n_joints + (7 + 3 * n_kp if has_object else 0)
    frames = []
    for i in range(n_frames):
        where = f"frame {i}"
        end = need(8 * n_floats, where)
        row = np.frombuffer(data, dtype="<f8", count=n_floats, offset=pos)
        pos = end
        end = need(n_ft + 1, where)
        contact = np.frombuffer(data, dtype=np.uint8, count=n_ft, offset=pos)
        phase_idx = data[end - 1]
        pos = end
        if not np.all((contact == 0) | (contact == 1)):
            raise ValidationError(f"{where}: contact flags must be 0 or 1")
        if phase_idx >= len(PHASES):
            raise ValidationError(f"{where}: phase index {phase_idx} out of range")
        for off, what in ((3, "wrist"), (10 + dof + 3 * n_joints, "object")):
            if what == "object" and not has_object:
                continue
            if abs(float(np.linalg.norm(row[off : off + 4])) - 1.0) > 1e-6:
                raise ValidationError(f"{where}: {what} quaternion is not unit norm")
        cursor = 7 + dof
        obj_pose = None
        obj_kp = None
        if has_object:
            base = cursor + 3 * n_joints
            obj_pose = Pose(row[base : base + 3], row[base + 3 : base + 7])
            obj_kp = row[base + 7 :].reshape(n_kp, 3)
        frames.append(
            Frame(
                wrist=Pose(row[0:3], row[3:7]),
                theta=row[7:cursor],
                joints=row[cursor : cursor + 3 * n_joints].reshape(n_joints, 3),
                contact=contact.astype(bool),
                phase=PHASES[phase_idx],
                obj_pose=obj_pose,
                obj_keypoints=obj_kp,
            )
        )
    if pos != len(data):
        raise ValidationError(f"{len(data) - pos} trailing bytes after frame data")
    return Trajectory(frames=tuple(frames), fps=fps, provenance=prov)


def save_trajectory(traj: Trajectory, path: str, fmt: str = "json") -> None:
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    data = trajectory_to_json_bytes(traj) if fmt == "json" else trajectory_to_binary(traj)
    with open(path, "wb") as fh:
        fh.write(data)


def load_trajectory(path: str) -> Trajectory:
    """Load either format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:16] == MAGIC:
        return trajectory_from_binary(data)
    return trajectory_from_json_bytes(data)


def write_manifest(path: str, manifest: dict) -> None:
    """Write a dataset manifest as canonical JSON.

    Manifests carry no timestamps: rebuilding a dataset from the same
    seed and config must produce byte-identical files, manifest
    included.
    """
    with open(path, "wb") as fh:
        fh.write(canonical_json(manifest))


def read_manifest(path: str) -> dict:
    with open(path, "rb") as fh:
        doc = json.loads(fh.read().decode("utf-8"))
    if not isinstance(doc, dict) or "items" not in doc:
        raise ValidationError("manifest needs an 'items' list")
    return doc
