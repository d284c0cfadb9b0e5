"""Auxiliary feature vectors for the stance and veracity models.

User metadata (follower count, following count, and their ratio) only exists
on Twitter; those three scalars are min-max scaled against the training
data's Twitter posts and Reddit posts get a zero vector instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embeddings import cosine_similarity
from .thread_model import Platform, Post, PostDepth, Thread, post_depth

FEATURE_DIM_A = 11
FEATURE_DIM_B = 15

_SCALED_FEATURES = ("followers", "following", "ratio")


class DegenerateFitError(ValueError):
    """The scaler cannot be fit (no Twitter posts in the training data)."""


@dataclass
class MinMaxScaler:
    mins: dict[str, float] | None = None
    maxs: dict[str, float] | None = None

    @property
    def fitted(self) -> bool:
        return self.mins is not None

    def transform(self, feature: str, value: float) -> float:
        if not self.fitted:
            raise ValueError("scaler is not fitted")
        lo, hi = self.mins[feature], self.maxs[feature]
        if hi <= lo:
            # constant feature carries no information
            return 0.0
        return float(np.clip((value - lo) / (hi - lo), 0.0, 1.0))

    def ratio_for(self, post: Post) -> float:
        """Follower/following ratio; a post following nobody maps to the fitted maximum."""
        if post.following_count == 0:
            if not self.fitted:
                raise ValueError("scaler is not fitted")
            return self.maxs["ratio"]
        return post.follower_count / post.following_count


def fit_scaler(train_posts: Iterable[Post]) -> MinMaxScaler:
    """Fit per-feature min/max on the training split's Twitter metadata."""
    followers, following, ratios = [], [], []
    for post in train_posts:
        if post.platform is not Platform.TWITTER:
            continue
        followers.append(float(post.follower_count))
        following.append(float(post.following_count))
        if post.following_count > 0:
            ratios.append(post.follower_count / post.following_count)
    if not followers:
        raise DegenerateFitError("no Twitter posts to fit the metadata scaler on")
    if not ratios:
        ratios = [0.0]
    values = {"followers": followers, "following": following, "ratio": ratios}
    return MinMaxScaler(
        mins={k: min(v) for k, v in values.items()},
        maxs={k: max(v) for k, v in values.items()},
    )


def user_meta_vector(post: Post, scaler: MinMaxScaler) -> np.ndarray:
    """[not-verified, verified, scaled followers, scaled following, scaled ratio]."""
    if post.platform is not Platform.TWITTER:
        return np.zeros(5)
    verified = np.array([0.0, 1.0]) if post.user_verified else np.array([1.0, 0.0])
    scaled = np.array(
        [
            scaler.transform("followers", post.follower_count),
            scaler.transform("following", post.following_count),
            scaler.transform("ratio", scaler.ratio_for(post)),
        ]
    )
    return np.concatenate([verified, scaled])


def _platform_onehot(post: Post) -> np.ndarray:
    return np.array([1.0, 0.0]) if post.platform is Platform.TWITTER else np.array([0.0, 1.0])


@dataclass(frozen=True)
class AuxFeaturesA:
    platform_onehot: tuple[float, float]
    user_meta: tuple[float, ...]
    cos_to_source: float
    depth_onehot: tuple[float, float, float]

    def vector(self, dtype=np.float32) -> np.ndarray:
        v = np.concatenate(
            [self.platform_onehot, self.user_meta, [self.cos_to_source], self.depth_onehot]
        ).astype(dtype)
        assert v.shape == (FEATURE_DIM_A,)
        return v


@dataclass(frozen=True)
class AuxFeaturesB:
    platform_onehot: tuple[float, float]
    user_meta: tuple[float, ...]
    media_onehot: tuple[float, float]
    upvote_ratio: float
    reply_fractions: tuple[float, float]
    sdq_mean: tuple[float, float, float]

    def vector(self, dtype=np.float32) -> np.ndarray:
        v = np.concatenate(
            [
                self.platform_onehot,
                self.user_meta,
                self.media_onehot,
                [self.upvote_ratio],
                self.reply_fractions,
                self.sdq_mean,
            ]
        ).astype(dtype)
        assert v.shape == (FEATURE_DIM_B,)
        return v


def aux_features_a(
    post: Post,
    thread: Thread,
    avg_embeddings: Mapping[str, np.ndarray],
    scaler: MinMaxScaler,
) -> AuxFeaturesA:
    """Meta-information features for the post under stance classification."""
    depth = post_depth(post, thread)
    if depth is PostDepth.SOURCE:
        cos = 1.0
    else:
        if post.id not in avg_embeddings:
            raise KeyError(f"no embedding for post {post.id}")
        if thread.source.id not in avg_embeddings:
            raise KeyError(f"no embedding for post {thread.source.id}")
        cos = float(np.clip(cosine_similarity(avg_embeddings[post.id], avg_embeddings[thread.source.id]), -1.0, 1.0))
    depth_onehot = {
        PostDepth.SOURCE: (1.0, 0.0, 0.0),
        PostDepth.DIRECT_REPLY: (0.0, 1.0, 0.0),
        PostDepth.NESTED_REPLY: (0.0, 0.0, 1.0),
    }[depth]
    return AuxFeaturesA(
        platform_onehot=tuple(_platform_onehot(post)),
        user_meta=tuple(user_meta_vector(post, scaler)),
        cos_to_source=cos,
        depth_onehot=depth_onehot,
    )


def aux_features_b(
    thread: Thread,
    scaler: MinMaxScaler,
    sdqc_estimates: Mapping[str, Sequence[float]],
) -> AuxFeaturesB:
    """Thread-level features for veracity classification, built on the source post."""
    source = thread.source
    has_media = source.has_image or source.has_url
    if source.platform is Platform.TWITTER:
        upvote = 0.5
    else:
        # Reddit records may lack the ratio; fall back to the neutral value
        upvote = source.upvote_ratio if source.upvote_ratio is not None else 0.5
    n_posts = len(thread.posts)
    n_direct = sum(1 for p in thread.replies if post_depth(p, thread) is PostDepth.DIRECT_REPLY)
    n_nested = len(thread.replies) - n_direct
    sdq = np.zeros(3)
    for p in thread.posts:
        if p.id not in sdqc_estimates:
            raise KeyError(f"no stance estimate for post {p.id}")
        sdq += np.asarray(sdqc_estimates[p.id], dtype=float)[:3]
    sdq /= n_posts
    return AuxFeaturesB(
        platform_onehot=tuple(_platform_onehot(source)),
        user_meta=tuple(user_meta_vector(source, scaler)),
        media_onehot=(1.0, 0.0) if has_media else (0.0, 1.0),
        upvote_ratio=float(upvote),
        reply_fractions=(n_direct / n_posts, n_nested / n_posts),
        sdq_mean=tuple(sdq),
    )
