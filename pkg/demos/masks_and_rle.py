"""Binary masks, run-length encoding, and IoU — the storage layer everything
else sits on. Run with: python3 demos/masks_and_rle.py"""

import numpy as np

from maskops import (
    BinaryMask,
    box_to_mask,
    mask_iou,
    mask_to_box,
    pairwise_iou_matrix,
    rle_decode,
    rle_encode,
)

# A mask is just a boolean grid. Internally the bits are packed into uint64
# words so area and IoU reduce to popcounts, but from_array/to_array hide that.
arr = np.zeros((6, 8), dtype=bool)
arr[1:4, 2:6] = True
mask = BinaryMask.from_array(arr)
print("mask:")
print(mask.to_array().astype(int))
print("area =", mask.area)

# Run-length encoding walks the flattened (row-major) grid and records
# alternating background/foreground run lengths, background first. A mask that
# starts with a foreground pixel simply gets a leading zero count.
rle = rle_encode(mask)
print("rle counts =", rle.counts, " (sum =", sum(rle.counts), "= 6*8)")
assert rle_decode(rle) == mask  # lossless

tiny = BinaryMask.from_array(np.array([[True, False, True]]))
print("starts-with-foreground counts =", rle_encode(tiny).counts)

# IoU = intersection / union, directly on the packed words.
other = BinaryMask.from_array(np.roll(arr, 1, axis=1))
print("IoU with a 1-pixel shift =", round(mask_iou(mask, other), 4))

# For N masks the pairwise IoUs go into one strict upper-triangular matrix,
# row i holding IoUs against every lower-scored mask j > i.
shifted = [BinaryMask.from_array(np.roll(arr, k, axis=1)) for k in range(4)]
matrix = pairwise_iou_matrix(shifted)
print("pairwise IoU matrix:")
print(np.round(matrix.values, 3))

# Tight bounding boxes use inclusive pixel coordinates.
box = mask_to_box(mask)
print("tight box =", box)
print("box painted back and re-boxed matches:", mask_to_box(box_to_mask(box, 6, 8)) == box)
