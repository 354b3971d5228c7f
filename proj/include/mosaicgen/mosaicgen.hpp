#ifndef MOSAICGEN_MOSAICGEN_HPP
#define MOSAICGEN_MOSAICGEN_HPP

#include "mosaicgen/classic.hpp"
#include "mosaicgen/coherent_noise.hpp"
#include "mosaicgen/config.hpp"
#include "mosaicgen/diffusion.hpp"
#include "mosaicgen/error.hpp"
#include "mosaicgen/guidance.hpp"
#include "mosaicgen/image.hpp"
#include "mosaicgen/metrics.hpp"
#include "mosaicgen/parallel.hpp"
#include "mosaicgen/pipeline.hpp"
#include "mosaicgen/pool_io.hpp"
#include "mosaicgen/png_io.hpp"
#include "mosaicgen/rng.hpp"
#include "mosaicgen/samples.hpp"

#endif  // MOSAICGEN_MOSAICGEN_HPP
