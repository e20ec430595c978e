"""Synthetic manifests shared by the CLI and acceptance tests."""

from crashbench.manifest import ClipRecord, Manifest, save_manifest

DURATION_S = 9.0  # 72 frames at 8 fps
EVENT_S = 6.0


def synthetic_manifest(n_clips, groups=("animal", "rain", "fog"), duration_s=DURATION_S):
    """Alternating positive/negative clips cycling through ``groups``.

    Positives carry their event at 6 s, or at the clip end for shorter clips.
    """
    clips = []
    for i in range(n_clips):
        positive = i % 2 == 0
        clips.append(ClipRecord(
            clip_id=f"syn-{i:03d}",
            group=groups[(i // 2) % len(groups)],
            label="positive" if positive else "negative",
            duration_s=duration_s,
            fps=8.0,
            source="synthetic",
            event_time_s=min(EVENT_S, duration_s) if positive else None,
        ))
    return Manifest(tuple(clips), name="synthetic", version="1")


def write_synthetic_manifest(path, n_clips, **kw):
    save_manifest(synthetic_manifest(n_clips, **kw), path)
    return path
