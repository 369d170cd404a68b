#pragma once

#include "advcert/bounds.hpp"
#include "advcert/core.hpp"
#include "advcert/data.hpp"
#include "advcert/io.hpp"
#include "advcert/linear.hpp"
#include "advcert/network.hpp"
#include "advcert/verify.hpp"
