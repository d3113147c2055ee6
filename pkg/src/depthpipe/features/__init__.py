from depthpipe.features.codebook import Codebook, fit_codebook
from depthpipe.features.encode import VideoDescriptor, early_fuse, fc6_pool, l2_normalize, vlad_encode
from depthpipe.features.extract import (
    FrameExtractor,
    FrameFeatures,
    ToyExtractor,
    extract_frame_features,
    lcd,
    make_extractor,
    spp_augment,
    spp_count,
)
from depthpipe.features.files import (
    load_codebook,
    load_pca,
    read_features,
    save_codebook,
    save_pca,
    write_features,
)
from depthpipe.features.pca import PcaModel, fit_pca, pca_reconstruct, pca_transform

__all__ = [
    "Codebook", "FrameExtractor", "FrameFeatures", "PcaModel", "ToyExtractor", "VideoDescriptor",
    "early_fuse", "extract_frame_features", "fc6_pool", "fit_codebook", "fit_pca", "l2_normalize",
    "lcd", "load_codebook", "load_pca", "make_extractor", "pca_reconstruct", "pca_transform", "read_features",
    "save_codebook", "save_pca", "spp_augment", "spp_count", "vlad_encode", "write_features",
]
