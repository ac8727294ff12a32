"""Generate a small planted-event dataset and look inside it: labels, the
binary feature format, distractor segments, and the nearest-prototype bound."""

import os
import tempfile

import numpy as np

from avloc import load_bundle, nearest_prototype_accuracy, synth_dataset
from avloc.data import load_entry

workdir = tempfile.mkdtemp(prefix="avloc_demo_")
manifest, info = synth_dataset(workdir, seed=0, n_videos=8, T=10, classes=4)

print(f"wrote {len(manifest.entries)} videos under {workdir}")
print(f"dims: T={manifest.T} d_a={manifest.d_a} d_v={manifest.d_v} "
      f"grid {manifest.h}x{manifest.w}, {manifest.classes} classes")

# Each video has a class and a contiguous event span; segments outside the
# span are background, and some of those are distractors: event-like audio
# over a frozen visual frame.
for i, entry in enumerate(manifest.entries[:4]):
    span = info.spans[i]
    distractors = np.flatnonzero(info.distractor_masks[i]).tolist()
    print(f"{entry.video_id}: class {entry.label.video_class}, "
          f"span [{span[0]}, {span[1]}), distractor segments {distractors}")
    print("   relevance:", entry.label.segment_relevance.tolist())

# The feature file is two self-describing blocks (audio then visual):
# magic, u32 rank, u32 extents, f32 payload, all little-endian.
path = os.path.join(workdir, manifest.entries[0].path)
raw = open(path, "rb").read()
print(f"\n{manifest.entries[0].path}: {len(raw)} bytes, magic {raw[:4]!r}")
bundle = load_bundle(path, manifest, manifest.entries[0].video_id)
print("audio block:", bundle.audio.shape, "visual block:", bundle.visual.shape)

# Distractor audio correlates with the class prototype just like real event
# audio, so audio alone cannot separate them; the visuals can.
entry = manifest.entries[0]
proto = info.audio_prototypes[entry.label.video_class]
bundle = load_entry(manifest, entry, workdir)
print("\nper-segment audio-prototype alignment vs relevance:")
for t in range(manifest.T):
    print(f"  t={t} dot={bundle.audio[t] @ proto:6.2f} "
          f"relevant={int(entry.label.segment_relevance[t])}")

# Nearest prototype on event segments bounds what any model should reach.
acc = nearest_prototype_accuracy(manifest, workdir, info.audio_prototypes)
print(f"\nnearest-prototype accuracy on event segments: {acc:.3f}")
