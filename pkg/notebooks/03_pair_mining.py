"""Which frame pairs get a caption, and which stay unlabeled."""
from changestream import NO_CHANGE, StreamManifest, mine

annotated = StreamManifest("annotated", num_frames=5, true_changepoint=3, captions=((4, 7),))
for lp in mine(annotated).labeled:
    kind = "no change" if lp.caption == NO_CHANGE else "change"
    print(lp.key, lp.caption, kind)

unannotated = StreamManifest("raw", num_frames=4, true_changepoint=2)
mined = mine(unannotated)
print("labeled:", [lp.key for lp in mined.labeled])
print("unlabeled:", list(mined.unlabeled))
