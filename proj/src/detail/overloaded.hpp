// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

namespace pkmix::detail {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace pkmix::detail
