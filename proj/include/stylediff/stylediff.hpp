#pragma once

#include "stylediff/audio_features.hpp"
#include "stylediff/checkpoint.hpp"
#include "stylediff/dataset.hpp"
#include "stylediff/denoiser.hpp"
#include "stylediff/diffusion.hpp"
#include "stylediff/face_model.hpp"
#include "stylediff/losses.hpp"
#include "stylediff/mesh_io.hpp"
#include "stylediff/metrics.hpp"
#include "stylediff/model.hpp"
#include "stylediff/sampler.hpp"
#include "stylediff/style_encoder.hpp"
#include "stylediff/trainer.hpp"
