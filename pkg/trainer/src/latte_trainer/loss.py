"""Anchor-masked classification loss: four-way cross entropy on the Pauli
channels plus binary cross entropies on the measurement and hook
channels. Anchors outside the valid maps, and measurement/hook anchors on
the final window round, are excluded; probabilities are clamped by a
small epsilon."""

from __future__ import annotations

import torch
import torch.nn.functional as F

EPS = 1e-7


def masked_loss(logits, pauli, meas, hook, pauli_mask, meas_mask,
                hook_mask):
    """Sum of the per-anchor losses, averaged over the batch.

    logits: (B, 6, T, Y, X); pauli: (B, T, Y, X) class ids; meas/hook:
    (B, T, Y, X) binary; masks: (Y, X) validity grids.
    """
    B, _, T, Hh, Ww = logits.shape
    total = logits.new_zeros(())

    probs = torch.softmax(logits[:, 0:4], dim=1)
    probs = probs.clamp(min=EPS)
    onehot = F.one_hot(pauli.long(), 4).permute(0, 4, 1, 2, 3)
    ce = -(onehot * probs.log()).sum(dim=1)
    total = total + (ce * pauli_mask[None, None]).sum()

    t_valid = torch.ones(T, dtype=torch.bool, device=logits.device)
    t_valid[-1] = False          # no mechanism on the final window round
    for channel, target, mask in ((4, meas, meas_mask),
                                  (5, hook, hook_mask)):
        p = torch.sigmoid(logits[:, channel]).clamp(EPS, 1 - EPS)
        bce = -(target.float() * p.log()
                + (1 - target.float()) * (1 - p).log())
        sel = mask[None, None] & t_valid[None, :, None, None]
        total = total + (bce * sel).sum()
    return total / B
