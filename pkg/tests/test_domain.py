import numpy as np
import pytest

from changeover.domain import (
    AffordabilityError,
    DimensionMismatchError,
    InfeasibleTradeError,
    PortfolioState,
    TargetPortfolio,
    TradePlan,
    TradeRow,
    apply_trades,
    portfolio_value,
    satisfies_target,
)
from conftest import make_instance


def state(holdings, cash):
    return PortfolioState(holdings=np.asarray(holdings, dtype=np.int64), cash=cash)


def row(buys, sells):
    buys = np.asarray(buys, dtype=np.int64)
    sells = np.asarray(sells, dtype=np.int64)
    return TradeRow(
        buys=buys,
        sells=sells,
        buy_flags=(buys > 0).astype(np.int64),
        sell_flags=(sells > 0).astype(np.int64),
    )


# --- portfolio_value -------------------------------------------------------


def test_value_of_pure_cash():
    assert portfolio_value(state([0, 0, 0], 1234), np.array([10, 20, 30])) == 1234


def test_value_of_shares_plus_cash():
    assert portfolio_value(state([2], 5), np.array([10])) == 25


def test_value_matches_scalar_loop(rng):
    for _ in range(50):
        n = int(rng.integers(1, 8))
        holdings = rng.integers(0, 20, size=n)
        cash = int(rng.integers(0, 10_000))
        prices = rng.integers(1, 5_000, size=n)
        expected = cash
        for a in range(n):
            expected += int(prices[a]) * int(holdings[a])
        assert portfolio_value(state(holdings, cash), prices) == expected


def test_value_rejects_mismatched_price_row():
    with pytest.raises(DimensionMismatchError):
        portfolio_value(state([1, 2], 0), np.array([10]))


# --- apply_trades ----------------------------------------------------------


def test_zero_trades_is_identity():
    before = state([3, 1], 500)
    after = apply_trades(before, row([0, 0], [0, 0]), np.array([10, 20]), fee=7)
    assert after.cash == before.cash
    assert np.array_equal(after.holdings, before.holdings)


def test_buy_two_shares_with_fee():
    after = apply_trades(state([0], 30), row([2], [0]), np.array([10]), fee=2)
    assert after.holdings.tolist() == [2]
    assert after.cash == 8


def test_apply_matches_unit_share_replay(rng):
    # oracle: apply each bought/sold share one at a time, fees once per flag
    for _ in range(60):
        n = int(rng.integers(1, 6))
        holdings = rng.integers(0, 10, size=n)
        prices = rng.integers(1, 500, size=n)
        fee = int(rng.integers(0, 5))
        buys = rng.integers(0, 4, size=n)
        sells = np.array([int(rng.integers(0, h + 1)) for h in holdings])
        sells[buys > 0] = 0  # one direction per asset per period
        trade = row(buys, sells)
        cash = int(prices @ buys) + fee * trade.flag_count + int(rng.integers(0, 1000))

        expected_holdings = holdings.copy()
        expected_cash = cash
        for a in range(n):
            for _ in range(int(buys[a])):
                expected_holdings[a] += 1
                expected_cash -= int(prices[a])
            for _ in range(int(sells[a])):
                expected_holdings[a] -= 1
                expected_cash += int(prices[a])
        expected_cash -= fee * trade.flag_count

        after = apply_trades(state(holdings, cash), trade, prices, fee)
        assert after.holdings.tolist() == expected_holdings.tolist()
        assert after.cash == expected_cash


def test_wealth_drops_by_fee_per_flag_at_constant_prices(rng):
    for _ in range(30):
        n = int(rng.integers(1, 5))
        holdings = rng.integers(0, 6, size=n)
        prices = rng.integers(1, 300, size=n)
        fee = int(rng.integers(0, 4))
        buys = rng.integers(0, 3, size=n)
        sells = np.array([int(rng.integers(0, h + 1)) for h in holdings])
        sells[buys > 0] = 0
        trade = row(buys, sells)
        cash = int(prices @ buys) + fee * trade.flag_count + 50
        before = state(holdings, cash)
        after = apply_trades(before, trade, prices, fee)
        assert portfolio_value(after, prices) == (
            portfolio_value(before, prices) - fee * trade.flag_count
        )


def test_short_sale_rejected():
    with pytest.raises(InfeasibleTradeError, match="no-short"):
        apply_trades(state([1], 100), row([0], [2]), np.array([10]), fee=0)


def test_leverage_rejected():
    with pytest.raises(InfeasibleTradeError, match="no-leverage"):
        apply_trades(state([0], 19), row([2], [0]), np.array([10]), fee=0)


def test_sell_proceeds_fund_buys_within_one_period():
    # sells and buys settle together, so zero starting cash is fine
    after = apply_trades(state([4, 0], 0), row([0, 2], [4, 0]), np.array([10, 20]), fee=0)
    assert after.holdings.tolist() == [0, 2]
    assert after.cash == 0


# --- trade row / plan validation ------------------------------------------


def test_trade_row_requires_flag_for_quantity():
    with pytest.raises(ValueError, match="flag"):
        TradeRow(
            buys=np.array([2]),
            sells=np.array([0]),
            buy_flags=np.array([0]),
            sell_flags=np.array([0]),
        )


def test_trade_row_rejects_both_directions():
    with pytest.raises(ValueError, match="buy and sell"):
        TradeRow(
            buys=np.array([1]),
            sells=np.array([1]),
            buy_flags=np.array([1]),
            sell_flags=np.array([1]),
        )


def test_empty_plan_has_no_flags():
    plan = TradePlan.empty(3, 2)
    assert plan.flag_count == 0
    assert plan.row(1).is_empty


# --- satisfies_target ------------------------------------------------------


def test_target_met_at_equality():
    assert satisfies_target(state([3, 1], 0), TargetPortfolio(np.array([3, 1])))


def test_target_missed_by_one_coordinate():
    assert not satisfies_target(state([3, 0], 0), TargetPortfolio(np.array([3, 1])))


def test_zero_target_always_met():
    assert satisfies_target(state([5, 2], 0), TargetPortfolio(np.array([0, 0])))


def test_target_monotone_in_holdings(rng):
    for _ in range(40):
        n = int(rng.integers(1, 6))
        target = TargetPortfolio(rng.integers(0, 5, size=n))
        holdings = rng.integers(0, 5, size=n)
        extra = holdings + rng.integers(0, 3, size=n)
        if satisfies_target(state(holdings, 0), target):
            assert satisfies_target(state(extra, 0), target)


# --- instance construction ------------------------------------------------


def test_instance_rejects_unaffordable_target():
    with pytest.raises(AffordabilityError):
        make_instance([[1000], [1000]], holdings=[0], cash=2999, target=[3])


def test_instance_affordability_is_checked_at_current_prices():
    # 3 x 1000 = 3000 <= 3000 wealth: construction passes even though fees
    # may later make the changeover infeasible (that is the solver's verdict)
    make_instance([[1000], [1000]], holdings=[0], cash=3000, target=[3], fee=100)


def test_instance_requires_enough_price_rows():
    from changeover.domain import AssetUniverse, PriceMatrix, TransitionInstance

    universe = AssetUniverse(symbols=("A0",))
    with pytest.raises(ValueError, match="price rows"):
        TransitionInstance(
            universe=universe,
            initial=state([0], 3000),
            target=TargetPortfolio(np.array([0])),
            horizon=2,
            fee=0,
            prices=PriceMatrix(
                universe=universe, values=np.array([[1000], [1000]]), period_labels=("0", "1")
            ),
        )
